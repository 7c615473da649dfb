//! Forward and backward passes of the layers the model is built from.
//!
//! Backward functions take the upstream gradient, accumulate into parameter
//! gradients passed by `&mut`, and return the gradient of the layer input.

use rand::Rng as _;

use super::{Rng, Tensor};
use crate::error::{Error, Result};

/// Floor applied to probabilities inside `ln`.
pub const LOG_FLOOR: f64 = 1e-12;

/// Gathers columns of a `[d, vocab]` embedding matrix into a `[d, ids.len()]`
/// matrix.
pub fn embed(table: &Tensor, ids: &[u32]) -> Result<Tensor> {
    let (d, vocab) = (table.rows(), table.cols());
    let mut out = Tensor::zeros(&[d, ids.len()]);
    let l = ids.len();
    for (t, &id) in ids.iter().enumerate() {
        let id = id as usize;
        if id >= vocab {
            return Err(Error::shape(format!("symbol {id} outside embedding table of {vocab}")));
        }
        for r in 0..d {
            out.data_mut()[r * l + t] = table.data()[r * vocab + id];
        }
    }
    Ok(out)
}

pub fn embed_backward(ids: &[u32], grad_out: &Tensor, grad_table: &mut Tensor) {
    let (d, vocab, l) = (grad_table.rows(), grad_table.cols(), ids.len());
    for (t, &id) in ids.iter().enumerate() {
        for r in 0..d {
            grad_table.data_mut()[r * vocab + id as usize] += grad_out.data()[r * l + t];
        }
    }
}

/// Valid-region 1-D convolution over time.
///
/// `input` is `[d, L]`, `filters` is `[k, d, w]`, `bias` is `[k]`; the output
/// is `[k, L - w + 1]` with
/// `out[i, t] = bias[i] + sum_{r, c} filters[i, r, c] * input[r, t + c]`.
pub fn narrow_conv(input: &Tensor, filters: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (k, d, w) = conv_dims(input, filters, bias)?;
    let l = input.cols();
    let out_len = l - w + 1;
    let mut out = Tensor::zeros(&[k, out_len]);
    let (x, f) = (input.data(), filters.data());
    for i in 0..k {
        let row = &mut out.data_mut()[i * out_len..(i + 1) * out_len];
        row.fill(bias.data()[i]);
        for r in 0..d {
            let xr = &x[r * l..(r + 1) * l];
            let fr = &f[(i * d + r) * w..(i * d + r + 1) * w];
            for (t, o) in row.iter_mut().enumerate() {
                *o += fr.iter().zip(&xr[t..t + w]).map(|(a, b)| a * b).sum::<f64>();
            }
        }
    }
    out.debug_check_finite();
    Ok(out)
}

fn conv_dims(input: &Tensor, filters: &Tensor, bias: &Tensor) -> Result<(usize, usize, usize)> {
    let fs = filters.shape();
    if fs.len() != 3 || input.shape().len() != 2 {
        return Err(Error::shape("convolution expects [d, L] input and [k, d, w] filters"));
    }
    let (k, d, w) = (fs[0], fs[1], fs[2]);
    if input.rows() != d {
        return Err(Error::shape(format!("input has {} rows, filters expect {d}", input.rows())));
    }
    bias.require_shape(&[k], "convolution bias")?;
    if input.cols() < w {
        return Err(Error::shape(format!(
            "input length {} shorter than filter width {w}",
            input.cols()
        )));
    }
    Ok((k, d, w))
}

pub fn narrow_conv_backward(
    input: &Tensor,
    filters: &Tensor,
    grad_out: &Tensor,
    grad_filters: &mut Tensor,
    grad_bias: &mut Tensor,
) -> Tensor {
    let fs = filters.shape();
    let (k, d, w) = (fs[0], fs[1], fs[2]);
    let l = input.cols();
    let out_len = l - w + 1;
    let mut grad_in = Tensor::zeros(&[d, l]);
    let (x, f, g) = (input.data(), filters.data(), grad_out.data());
    for i in 0..k {
        let gi = &g[i * out_len..(i + 1) * out_len];
        grad_bias.data_mut()[i] += gi.iter().sum::<f64>();
        for r in 0..d {
            let base = (i * d + r) * w;
            for c in 0..w {
                let mut acc = 0.0;
                let fw = f[base + c];
                let gin = &mut grad_in.data_mut()[r * l..(r + 1) * l];
                for t in 0..out_len {
                    acc += gi[t] * x[r * l + t + c];
                    gin[t + c] += gi[t] * fw;
                }
                grad_filters.data_mut()[base + c] += acc;
            }
        }
    }
    grad_in
}

pub fn relu(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    out.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
    out
}

/// Gradient through ReLU given its pre-activation.
pub fn relu_backward(pre: &Tensor, grad_out: &Tensor) -> Tensor {
    let mut g = grad_out.clone();
    for (gv, &p) in g.data_mut().iter_mut().zip(pre.data()) {
        if p <= 0.0 {
            *gv = 0.0;
        }
    }
    g
}

/// Row-wise maximum over time of a `[k, L]` matrix, with the index of the
/// first maximum in each row.
pub fn max_pool_time(x: &Tensor) -> (Tensor, Vec<usize>) {
    let (k, l) = (x.rows(), x.cols());
    let mut out = Vec::with_capacity(k);
    let mut arg = Vec::with_capacity(k);
    for i in 0..k {
        let row = &x.data()[i * l..(i + 1) * l];
        let mut best = 0;
        for t in 1..l {
            if row[t] > row[best] {
                best = t;
            }
        }
        out.push(row[best]);
        arg.push(best);
    }
    (Tensor::vector(out), arg)
}

pub fn max_pool_time_backward(grad_out: &Tensor, argmax: &[usize], len: usize) -> Tensor {
    let mut g = Tensor::zeros(&[argmax.len(), len]);
    for (i, &t) in argmax.iter().enumerate() {
        g.data_mut()[i * len + t] = grad_out.data()[i];
    }
    g
}

/// Inverted-dropout mask: each entry is either 0 or `1 / keep_prob`.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask(pub Vec<f64>);

impl DropoutMask {
    pub fn sample(len: usize, rate: f64, rng: &mut Rng) -> Result<Self> {
        check_rate(rate)?;
        let keep = 1.0 - rate;
        Ok(DropoutMask(
            (0..len)
                .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
                .collect(),
        ))
    }

    pub fn apply(&self, x: &Tensor) -> Tensor {
        debug_assert_eq!(self.0.len(), x.len());
        let mut out = x.clone();
        for (v, m) in out.data_mut().iter_mut().zip(&self.0) {
            *v *= m;
        }
        out
    }
}

fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::invalid(format!("dropout rate {rate} outside [0, 1)")));
    }
    Ok(())
}

/// Inverted dropout; identity (and no mask) outside training.
pub fn dropout(x: &Tensor, rate: f64, training: bool, rng: &mut Rng) -> Result<(Tensor, Option<DropoutMask>)> {
    check_rate(rate)?;
    if !training {
        return Ok((x.clone(), None));
    }
    let mask = DropoutMask::sample(x.len(), rate, rng)?;
    Ok((mask.apply(x), Some(mask)))
}

/// `a · x + b` for `a: [m, n]`, `x: [n]`, `b: [m]`.
pub fn affine(x: &[f64], a: &Tensor, b: &Tensor) -> Result<Vec<f64>> {
    let (m, n) = (a.rows(), a.cols());
    if x.len() != n || b.len() != m {
        return Err(Error::shape(format!(
            "affine: weight {:?}, input {}, bias {}",
            a.shape(),
            x.len(),
            b.len()
        )));
    }
    Ok((0..m)
        .map(|i| b.data()[i] + a.row(i).iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
        .collect())
}

pub fn affine_backward(x: &[f64], a: &Tensor, grad_out: &[f64], grad_a: &mut Tensor, grad_b: &mut Tensor) -> Vec<f64> {
    let n = a.cols();
    let mut gx = vec![0.0; n];
    for (i, &g) in grad_out.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        grad_b.data_mut()[i] += g;
        let row = a.row(i);
        let grow = grad_a.row_mut(i);
        for j in 0..n {
            grow[j] += g * x[j];
            gx[j] += g * row[j];
        }
    }
    gx
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// Gradient of the logits given the softmax output and `dL/dp`.
pub fn softmax_backward(p: &[f64], grad_p: &[f64]) -> Vec<f64> {
    let dot: f64 = p.iter().zip(grad_p).map(|(a, b)| a * b).sum();
    p.iter().zip(grad_p).map(|(pi, gi)| pi * (gi - dot)).collect()
}

/// `-sum_l target[l] * ln(max(p[l], 1e-12))`; `target` may be any
/// distribution.
pub fn cross_entropy(p: &[f64], target: &[f64]) -> f64 {
    p.iter()
        .zip(target)
        .filter(|(_, &t)| t != 0.0)
        .map(|(&pi, &t)| -t * pi.max(LOG_FLOOR).ln())
        .sum()
}

pub fn cross_entropy_backward(p: &[f64], target: &[f64]) -> Vec<f64> {
    p.iter()
        .zip(target)
        .map(|(&pi, &t)| if t == 0.0 || pi < LOG_FLOOR { 0.0 } else { -t / pi })
        .collect()
}
