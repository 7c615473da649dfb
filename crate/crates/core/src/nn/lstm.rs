//! LSTM cell with optional peephole connections.
//!
//! ```text
//! i = σ(Wx_i x + Wh_i h' + p_i ⊙ c' + b_i)
//! f = σ(Wx_f x + Wh_f h' + p_f ⊙ c' + b_f)
//! g = tanh(Wx_g x + Wh_g h' + b_g)
//! c = f ⊙ c' + i ⊙ g
//! o = σ(Wx_o x + Wh_o h' + p_o ⊙ c + b_o)
//! h = o ⊙ tanh(c)
//! ```
//!
//! Gate blocks are stacked in the order i, f, g, o.

use super::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    /// `[4h, input]`
    pub w_input: Tensor,
    /// `[4h, h]`
    pub w_hidden: Tensor,
    /// `[4h]`
    pub bias: Tensor,
    /// `[3, h]`: input, forget and output gate peepholes.
    pub peephole: Tensor,
}

impl LstmParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        LstmParams {
            w_input: Tensor::zeros(&[4 * hidden, input]),
            w_hidden: Tensor::zeros(&[4 * hidden, hidden]),
            bias: Tensor::zeros(&[4 * hidden]),
            peephole: Tensor::zeros(&[3, hidden]),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_hidden.cols()
    }

    pub fn input(&self) -> usize {
        self.w_input.cols()
    }

    pub fn tensors(&self) -> [&Tensor; 4] {
        [&self.w_input, &self.w_hidden, &self.bias, &self.peephole]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 4] {
        [&mut self.w_input, &mut self.w_hidden, &mut self.bias, &mut self.peephole]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        LstmState {
            h: vec![0.0; hidden],
            c: vec![0.0; hidden],
        }
    }
}

/// Everything one step's backward pass needs.
#[derive(Debug, Clone)]
pub struct LstmStepCache {
    x: Vec<f64>,
    prev: LstmState,
    i: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    o: Vec<f64>,
    c: Vec<f64>,
    tanh_c: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn matvec_add(w: &Tensor, x: &[f64], out: &mut [f64]) {
    let n = w.cols();
    for (r, o) in out.iter_mut().enumerate() {
        *o += w.data()[r * n..(r + 1) * n].iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// One time step. Returns the new state (its `h` is the step output) and the
/// cache for [`lstm_step_backward`].
pub fn lstm_step(params: &LstmParams, x: &[f64], prev: &LstmState, peepholes: bool) -> Result<(LstmState, LstmStepCache)> {
    let h = params.hidden();
    if x.len() != params.input() || prev.h.len() != h || prev.c.len() != h {
        return Err(Error::shape(format!(
            "lstm step: input {} (want {}), state {}/{} (want {h})",
            x.len(),
            params.input(),
            prev.h.len(),
            prev.c.len()
        )));
    }
    let mut pre = params.bias.data().to_vec();
    matvec_add(&params.w_input, x, &mut pre);
    matvec_add(&params.w_hidden, &prev.h, &mut pre);
    let p = params.peephole.data();
    let (mut i, mut f, mut g, mut o) = (vec![0.0; h], vec![0.0; h], vec![0.0; h], vec![0.0; h]);
    let mut c = vec![0.0; h];
    let mut tanh_c = vec![0.0; h];
    let mut out = vec![0.0; h];
    for j in 0..h {
        let (pi, pf, po) = if peepholes { (p[j], p[h + j], p[2 * h + j]) } else { (0.0, 0.0, 0.0) };
        i[j] = sigmoid(pre[j] + pi * prev.c[j]);
        f[j] = sigmoid(pre[h + j] + pf * prev.c[j]);
        g[j] = pre[2 * h + j].tanh();
        c[j] = f[j] * prev.c[j] + i[j] * g[j];
        o[j] = sigmoid(pre[3 * h + j] + po * c[j]);
        tanh_c[j] = c[j].tanh();
        out[j] = o[j] * tanh_c[j];
    }
    let state = LstmState { h: out, c: c.clone() };
    let cache = LstmStepCache {
        x: x.to_vec(),
        prev: prev.clone(),
        i,
        f,
        g,
        o,
        c,
        tanh_c,
    };
    Ok((state, cache))
}

/// Gradients flowing out of one step: into its input and the previous state.
pub struct LstmStepGrads {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
}

/// Backward pass of one step given `dL/dh` and `dL/dc` arriving from above
/// and from the next step. Parameter gradients are accumulated into `grads`.
pub fn lstm_step_backward(
    params: &LstmParams,
    cache: &LstmStepCache,
    grad_h: &[f64],
    grad_c: &[f64],
    peepholes: bool,
    grads: &mut LstmParams,
) -> LstmStepGrads {
    let h = params.hidden();
    let p = params.peephole.data();
    let mut da = vec![0.0; 4 * h];
    let mut dc_prev = vec![0.0; h];
    for j in 0..h {
        let (pi, pf, po) = if peepholes { (p[j], p[h + j], p[2 * h + j]) } else { (0.0, 0.0, 0.0) };
        let (i, f, g, o) = (cache.i[j], cache.f[j], cache.g[j], cache.o[j]);
        let da_o = grad_h[j] * cache.tanh_c[j] * o * (1.0 - o);
        let dc = grad_c[j] + grad_h[j] * o * (1.0 - cache.tanh_c[j] * cache.tanh_c[j]) + da_o * po;
        let da_i = dc * g * i * (1.0 - i);
        let da_g = dc * i * (1.0 - g * g);
        let da_f = dc * cache.prev.c[j] * f * (1.0 - f);
        dc_prev[j] = dc * f + da_i * pi + da_f * pf;
        if peepholes {
            let gp = grads.peephole.data_mut();
            gp[j] += da_i * cache.prev.c[j];
            gp[h + j] += da_f * cache.prev.c[j];
            gp[2 * h + j] += da_o * cache.c[j];
        }
        da[j] = da_i;
        da[h + j] = da_f;
        da[2 * h + j] = da_g;
        da[3 * h + j] = da_o;
    }
    let n_in = params.input();
    let mut dx = vec![0.0; n_in];
    let mut dh_prev = vec![0.0; h];
    for (r, &d) in da.iter().enumerate() {
        grads.bias.data_mut()[r] += d;
        if d == 0.0 {
            continue;
        }
        let wx = &params.w_input.data()[r * n_in..(r + 1) * n_in];
        let gwx = &mut grads.w_input.data_mut()[r * n_in..(r + 1) * n_in];
        for k in 0..n_in {
            gwx[k] += d * cache.x[k];
            dx[k] += d * wx[k];
        }
        let wh = &params.w_hidden.data()[r * h..(r + 1) * h];
        let gwh = &mut grads.w_hidden.data_mut()[r * h..(r + 1) * h];
        for k in 0..h {
            gwh[k] += d * cache.prev.h[k];
            dh_prev[k] += d * wh[k];
        }
    }
    LstmStepGrads {
        x: dx,
        h_prev: dh_prev,
        c_prev: dc_prev,
    }
}

/// Runs the cell over a sequence from a zero state; returns the per-step
/// outputs and caches.
pub fn lstm_forward(params: &LstmParams, inputs: &[Vec<f64>], peepholes: bool) -> Result<(Vec<Vec<f64>>, Vec<LstmStepCache>)> {
    let mut state = LstmState::zeros(params.hidden());
    let mut outs = Vec::with_capacity(inputs.len());
    let mut caches = Vec::with_capacity(inputs.len());
    for x in inputs {
        let (next, cache) = lstm_step(params, x, &state, peepholes)?;
        outs.push(next.h.clone());
        caches.push(cache);
        state = next;
    }
    Ok((outs, caches))
}

/// Backpropagation through time for [`lstm_forward`]; returns input gradients.
pub fn lstm_backward(
    params: &LstmParams,
    caches: &[LstmStepCache],
    grad_outputs: &[Vec<f64>],
    peepholes: bool,
    grads: &mut LstmParams,
) -> Vec<Vec<f64>> {
    let h = params.hidden();
    let mut dh_next = vec![0.0; h];
    let mut dc_next = vec![0.0; h];
    let mut dxs = vec![Vec::new(); caches.len()];
    for t in (0..caches.len()).rev() {
        let dh: Vec<f64> = grad_outputs[t].iter().zip(&dh_next).map(|(a, b)| a + b).collect();
        let step = lstm_step_backward(params, &caches[t], &dh, &dc_next, peepholes, grads);
        dxs[t] = step.x;
        dh_next = step.h_prev;
        dc_next = step.c_prev;
    }
    dxs
}
