//! The hierarchical character-to-word language-ID network.
//!
//! Each word is encoded on its own ("char2vec"): characters are embedded,
//! padded, passed through a width-3 convolution with ReLU (and dropout while
//! training), then through three parallel convolution banks of widths 3, 4
//! and 5 with ReLU, max-pooled over time into `y` and refined by a residual
//! layer `z = y + ReLU(W y + b)`. A bidirectional LSTM runs over the word
//! vectors; each position's concatenated hidden states go through an affine
//! layer and a softmax over labels. The tweet prediction is the average of
//! the per-word distributions.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::UND;
use crate::nn::lstm::{lstm_backward, lstm_forward, LstmStepCache};
use crate::nn::ops::{
    affine, affine_backward, cross_entropy, cross_entropy_backward, embed, embed_backward, max_pool_time,
    max_pool_time_backward, narrow_conv, narrow_conv_backward, relu, relu_backward, softmax, softmax_backward,
    DropoutMask, LOG_FLOOR,
};
use crate::nn::{init_uniform, LstmParams, Rng, Tensor, INIT_RANGE};
use crate::text::PAD;

pub const CONV1_WIDTH: usize = 3;
pub const CONV2_WIDTHS: [usize; 3] = [3, 4, 5];
/// Words shorter than this are right-padded so that every second-layer
/// filter fits.
pub const MIN_CONV1_COLUMNS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Character vocabulary size, reserved symbols included.
    pub vocab_size: usize,
    /// Character embedding size.
    pub char_dim: usize,
    /// Filters in the first convolution (n1).
    pub conv1_filters: usize,
    /// Filters per width in the second convolution (n2).
    pub conv2_filters: usize,
    /// Hidden size of each LSTM direction.
    pub lstm_hidden: usize,
    pub num_labels: usize,
    pub peepholes: bool,
}

impl ModelConfig {
    /// Size of the word vectors `y` and `z`: three banks of n2 filters.
    pub fn word_dim(&self) -> usize {
        CONV2_WIDTHS.len() * self.conv2_filters
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            self.vocab_size,
            self.char_dim,
            self.conv1_filters,
            self.conv2_filters,
            self.lstm_hidden,
            self.num_labels,
        ];
        if dims.contains(&0) {
            return Err(Error::invalid(format!("model dimensions must be positive: {self:?}")));
        }
        if self.vocab_size <= PAD as usize {
            return Err(Error::invalid("vocabulary must include the reserved symbols"));
        }
        Ok(())
    }
}

/// All trainable tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    config: ModelConfig,
    /// `[d, |C|]`
    pub char_embed: Tensor,
    /// `[n1, d, 3]`
    pub conv1_w: Tensor,
    pub conv1_b: Tensor,
    /// `[n2, n1, w]` for w = 3, 4, 5
    pub conv2_w: [Tensor; 3],
    pub conv2_b: [Tensor; 3],
    /// `[3 n2, 3 n2]`
    pub residual_w: Tensor,
    pub residual_b: Tensor,
    pub lstm_fwd: LstmParams,
    pub lstm_bwd: LstmParams,
    /// `[labels, 2h]`; row `l` is the embedding of label `l`.
    pub output_w: Tensor,
    pub output_b: Tensor,
}

impl ModelParams {
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let (d, n1, n2, h) = (config.char_dim, config.conv1_filters, config.conv2_filters, config.lstm_hidden);
        let wd = config.word_dim();
        Ok(ModelParams {
            config,
            char_embed: Tensor::zeros(&[d, config.vocab_size]),
            conv1_w: Tensor::zeros(&[n1, d, CONV1_WIDTH]),
            conv1_b: Tensor::zeros(&[n1]),
            conv2_w: CONV2_WIDTHS.map(|w| Tensor::zeros(&[n2, n1, w])),
            conv2_b: CONV2_WIDTHS.map(|_| Tensor::zeros(&[n2])),
            residual_w: Tensor::zeros(&[wd, wd]),
            residual_b: Tensor::zeros(&[wd]),
            lstm_fwd: LstmParams::zeros(wd, h),
            lstm_bwd: LstmParams::zeros(wd, h),
            output_w: Tensor::zeros(&[config.num_labels, 2 * h]),
            output_b: Tensor::zeros(&[config.num_labels]),
        })
    }

    /// Weights drawn from `U(-0.05, 0.05)` in [`Self::named_tensors`] order,
    /// biases zero.
    pub fn init(config: ModelConfig, rng: &mut Rng) -> Result<Self> {
        Self::init_with_range(config, INIT_RANGE, rng)
    }

    pub fn init_with_range(config: ModelConfig, range: f64, rng: &mut Rng) -> Result<Self> {
        let mut params = Self::zeros(config)?;
        for (name, t) in params.named_tensors_mut() {
            if !is_bias(&name) {
                init_uniform(t, range, rng);
            }
        }
        Ok(params)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Every tensor with a stable name, in serialization order.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = vec![
            ("char_embed".into(), &self.char_embed),
            ("conv1.weight".into(), &self.conv1_w),
            ("conv1.bias".into(), &self.conv1_b),
        ];
        for (k, w) in CONV2_WIDTHS.iter().enumerate() {
            out.push((format!("conv2.w{w}.weight"), &self.conv2_w[k]));
            out.push((format!("conv2.w{w}.bias"), &self.conv2_b[k]));
        }
        out.push(("residual.weight".into(), &self.residual_w));
        out.push(("residual.bias".into(), &self.residual_b));
        for (dir, lstm) in [("fwd", &self.lstm_fwd), ("bwd", &self.lstm_bwd)] {
            for (part, t) in LSTM_PARTS.iter().zip(lstm.tensors()) {
                out.push((format!("lstm.{dir}.{part}"), t));
            }
        }
        out.push(("output.weight".into(), &self.output_w));
        out.push(("output.bias".into(), &self.output_b));
        out
    }

    pub fn named_tensors_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out: Vec<(String, &mut Tensor)> = vec![
            ("char_embed".into(), &mut self.char_embed),
            ("conv1.weight".into(), &mut self.conv1_w),
            ("conv1.bias".into(), &mut self.conv1_b),
        ];
        for ((w, cw), cb) in CONV2_WIDTHS.iter().zip(self.conv2_w.iter_mut()).zip(self.conv2_b.iter_mut()) {
            out.push((format!("conv2.w{w}.weight"), cw));
            out.push((format!("conv2.w{w}.bias"), cb));
        }
        out.push(("residual.weight".into(), &mut self.residual_w));
        out.push(("residual.bias".into(), &mut self.residual_b));
        for (dir, lstm) in [("fwd", &mut self.lstm_fwd), ("bwd", &mut self.lstm_bwd)] {
            for (part, t) in LSTM_PARTS.iter().zip(lstm.tensors_mut()) {
                out.push((format!("lstm.{dir}.{part}"), t));
            }
        }
        out.push(("output.weight".into(), &mut self.output_w));
        out.push(("output.bias".into(), &mut self.output_b));
        out
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        self.named_tensors().into_iter().map(|(_, t)| t).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.named_tensors_mut().into_iter().map(|(_, t)| t).collect()
    }

    pub fn param_count(&self) -> usize {
        let peep_unused = if self.config.peepholes { 0 } else { 2 * self.lstm_fwd.peephole.len() };
        self.tensors().iter().map(|t| t.len()).sum::<usize>() - peep_unused
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.config).expect("config already validated")
    }

    pub fn add_assign(&mut self, other: &ModelParams) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, k: f64) {
        for t in self.tensors_mut() {
            t.scale(k);
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.tensors().iter().flat_map(|t| t.data().iter().copied()).collect()
    }

    pub fn set_flat(&mut self, values: &[f64]) {
        let mut pos = 0;
        for t in self.tensors_mut() {
            let n = t.len();
            t.data_mut().copy_from_slice(&values[pos..pos + n]);
            pos += n;
        }
        assert_eq!(pos, values.len(), "flat parameter vector has the wrong length");
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }

    /// Rows of the output layer: one vector per label.
    pub fn label_embeddings(&self) -> Vec<Vec<f64>> {
        (0..self.output_w.rows()).map(|r| self.output_w.row(r).to_vec()).collect()
    }
}

const LSTM_PARTS: [&str; 4] = ["w_input", "w_hidden", "bias", "peephole"];

fn is_bias(name: &str) -> bool {
    name.ends_with("bias")
}

/// Source of dropout masks for a forward pass.
pub enum Dropout<'a> {
    /// Evaluation: no dropout.
    Off,
    /// Training: masks drawn from `rng`.
    Sample { rate: f64, rng: &'a mut Rng },
    /// Reuse masks recorded by an earlier pass, in the same order.
    Replay { masks: &'a [DropoutMask], next: usize },
}

impl<'a> Dropout<'a> {
    pub fn replay(masks: &'a [DropoutMask]) -> Self {
        Dropout::Replay { masks, next: 0 }
    }

    fn mask(&mut self, len: usize) -> Result<Option<DropoutMask>> {
        match self {
            Dropout::Off => Ok(None),
            Dropout::Sample { rate, rng } => DropoutMask::sample(len, *rate, rng).map(Some),
            Dropout::Replay { masks, next } => {
                let mask = masks
                    .get(*next)
                    .cloned()
                    .ok_or_else(|| Error::invalid("ran out of recorded dropout masks"))?;
                if mask.0.len() != len {
                    return Err(Error::shape("recorded dropout mask has the wrong length"));
                }
                *next += 1;
                Ok(Some(mask))
            }
        }
    }
}

/// Intermediate values of one word's encoding.
#[derive(Debug, Clone)]
pub struct WordEncoding {
    /// Character indices with padding.
    pub padded: Vec<u32>,
    pub embedded: Tensor,
    pub conv1_pre: Tensor,
    /// First-layer output after ReLU and dropout (`T1`).
    pub t1: Tensor,
    pub t1_mask: Option<DropoutMask>,
    /// Second-layer pre-activations per width (`T2` before ReLU).
    pub conv2_pre: [Tensor; 3],
    pub pool_argmax: [Vec<usize>; 3],
    pub y: Vec<f64>,
    pub residual_pre: Vec<f64>,
    pub z: Vec<f64>,
}

/// Pads a word: one `PAD` on each side plus extra right `PAD`s so the first
/// layer yields at least five columns.
pub fn pad_word(ids: &[u32]) -> Vec<u32> {
    let cols = ids.len().max(MIN_CONV1_COLUMNS);
    let mut padded = Vec::with_capacity(cols + 2);
    padded.push(PAD);
    padded.extend_from_slice(ids);
    padded.resize(cols + 2, PAD);
    padded
}

/// Encodes one word into its vector `z`.
pub fn char2vec(word: &[u32], params: &ModelParams, dropout: &mut Dropout) -> Result<WordEncoding> {
    if word.is_empty() {
        return Err(Error::invalid("cannot encode an empty word"));
    }
    let padded = pad_word(word);
    let embedded = embed(&params.char_embed, &padded)?;
    let conv1_pre = narrow_conv(&embedded, &params.conv1_w, &params.conv1_b)?;
    let mut t1 = relu(&conv1_pre);
    let t1_mask = dropout.mask(t1.len())?;
    if let Some(mask) = &t1_mask {
        t1 = mask.apply(&t1);
    }
    let mut y = Vec::with_capacity(params.config.word_dim());
    let mut conv2_pre = Vec::with_capacity(3);
    let mut pool_argmax = Vec::with_capacity(3);
    for k in 0..CONV2_WIDTHS.len() {
        let pre = narrow_conv(&t1, &params.conv2_w[k], &params.conv2_b[k])?;
        let (pooled, arg) = max_pool_time(&relu(&pre));
        y.extend_from_slice(pooled.data());
        conv2_pre.push(pre);
        pool_argmax.push(arg);
    }
    let residual_pre = affine(&y, &params.residual_w, &params.residual_b)?;
    let z = y.iter().zip(&residual_pre).map(|(a, r)| a + r.max(0.0)).collect();
    Ok(WordEncoding {
        padded,
        embedded,
        conv1_pre,
        t1,
        t1_mask,
        conv2_pre: conv2_pre.try_into().expect("three banks"),
        pool_argmax: pool_argmax.try_into().expect("three banks"),
        y,
        residual_pre,
        z,
    })
}

/// Eval-mode word vector.
pub fn word_vector(word: &[u32], params: &ModelParams) -> Result<Vec<f64>> {
    Ok(char2vec(word, params, &mut Dropout::Off)?.z)
}

fn char2vec_backward(params: &ModelParams, enc: &WordEncoding, grad_z: &[f64], grads: &mut ModelParams) {
    let n2 = params.config.conv2_filters;
    // z = y + relu(r), r = W y + b
    let grad_r: Vec<f64> = grad_z
        .iter()
        .zip(&enc.residual_pre)
        .map(|(g, r)| if *r > 0.0 { *g } else { 0.0 })
        .collect();
    let through = affine_backward(&enc.y, &params.residual_w, &grad_r, &mut grads.residual_w, &mut grads.residual_b);
    let grad_y: Vec<f64> = grad_z.iter().zip(&through).map(|(a, b)| a + b).collect();

    let mut grad_t1 = Tensor::zeros(enc.t1.shape());
    for k in 0..CONV2_WIDTHS.len() {
        let pre = &enc.conv2_pre[k];
        let seg = Tensor::vector(grad_y[k * n2..(k + 1) * n2].to_vec());
        let grad_pooled = max_pool_time_backward(&seg, &enc.pool_argmax[k], pre.cols());
        let grad_pre = relu_backward(pre, &grad_pooled);
        let g = narrow_conv_backward(&enc.t1, &params.conv2_w[k], &grad_pre, &mut grads.conv2_w[k], &mut grads.conv2_b[k]);
        grad_t1.add_assign(&g);
    }
    if let Some(mask) = &enc.t1_mask {
        grad_t1 = mask.apply(&grad_t1);
    }
    let grad_conv1 = relu_backward(&enc.conv1_pre, &grad_t1);
    let grad_embedded = narrow_conv_backward(&enc.embedded, &params.conv1_w, &grad_conv1, &mut grads.conv1_w, &mut grads.conv1_b);
    embed_backward(&enc.padded, &grad_embedded, &mut grads.char_embed);
}

/// Per-word label distributions and their average.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub word_probs: Vec<Vec<f64>>,
    pub sentence: Vec<f64>,
}

impl Prediction {
    pub fn from_word_probs(word_probs: Vec<Vec<f64>>) -> Self {
        let labels = word_probs.first().map_or(0, Vec::len);
        let t = word_probs.len() as f64;
        let mut sentence = vec![0.0; labels];
        for p in &word_probs {
            for (s, v) in sentence.iter_mut().zip(p) {
                *s += v;
            }
        }
        sentence.iter_mut().for_each(|s| *s /= t);
        Prediction { word_probs, sentence }
    }

    /// Index of the most probable label of each word.
    pub fn word_argmax(&self) -> Vec<usize> {
        self.word_probs.iter().map(|p| argmax(p)).collect()
    }
}

/// Index of the first maximum.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Everything the backward pass of a tweet needs.
#[derive(Debug, Clone)]
pub struct SentenceCache {
    pub words: Vec<WordEncoding>,
    lstm_masks: Vec<Option<DropoutMask>>,
    inputs: Vec<Vec<f64>>,
    fwd: Vec<LstmStepCache>,
    bwd: Vec<LstmStepCache>,
    /// Concatenated biLSTM outputs `v_i`.
    pub outputs: Vec<Vec<f64>>,
    pub prediction: Prediction,
}

impl SentenceCache {
    /// Masks in the order a forward pass consumes them, for [`Dropout::replay`].
    pub fn masks(&self) -> Vec<DropoutMask> {
        self.words
            .iter()
            .filter_map(|w| w.t1_mask.clone())
            .chain(self.lstm_masks.iter().flatten().cloned())
            .collect()
    }
}

/// Runs the bidirectional LSTM over word vectors. Returns the per-word
/// outputs `v_i = [forward h_i ; backward h_i]`.
pub fn encode_sequence(words: &[Vec<f64>], params: &ModelParams) -> Result<Vec<Vec<f64>>> {
    let (fwd, _) = lstm_forward(&params.lstm_fwd, words, params.config.peepholes)?;
    let reversed: Vec<Vec<f64>> = words.iter().rev().cloned().collect();
    let (mut bwd, _) = lstm_forward(&params.lstm_bwd, &reversed, params.config.peepholes)?;
    bwd.reverse();
    Ok(fwd.into_iter().zip(bwd).map(|(mut f, b)| {
        f.extend(b);
        f
    }).collect())
}

/// Full forward pass over one tweet given its encoded words.
pub fn forward(words: &[Vec<u32>], params: &ModelParams, dropout: &mut Dropout) -> Result<SentenceCache> {
    if words.is_empty() {
        return Err(Error::invalid("cannot predict an empty word sequence"));
    }
    let peep = params.config.peepholes;
    let encodings = words
        .iter()
        .map(|w| char2vec(w, params, dropout))
        .collect::<Result<Vec<_>>>()?;
    let mut lstm_masks = Vec::with_capacity(words.len());
    let mut inputs = Vec::with_capacity(words.len());
    for enc in &encodings {
        let mask = dropout.mask(enc.z.len())?;
        inputs.push(match &mask {
            Some(m) => enc.z.iter().zip(&m.0).map(|(a, b)| a * b).collect(),
            None => enc.z.clone(),
        });
        lstm_masks.push(mask);
    }
    let (fwd_out, fwd) = lstm_forward(&params.lstm_fwd, &inputs, peep)?;
    let reversed: Vec<Vec<f64>> = inputs.iter().rev().cloned().collect();
    let (mut bwd_out, bwd) = lstm_forward(&params.lstm_bwd, &reversed, peep)?;
    bwd_out.reverse();
    let outputs: Vec<Vec<f64>> = fwd_out
        .into_iter()
        .zip(bwd_out)
        .map(|(mut f, b)| {
            f.extend(b);
            f
        })
        .collect();
    let word_probs = outputs
        .iter()
        .map(|v| affine(v, &params.output_w, &params.output_b).map(|l| softmax(&l)))
        .collect::<Result<Vec<_>>>()?;
    Ok(SentenceCache {
        words: encodings,
        lstm_masks,
        inputs,
        fwd,
        bwd,
        outputs,
        prediction: Prediction::from_word_probs(word_probs),
    })
}

/// Eval-mode prediction.
pub fn predict_sentence(words: &[Vec<u32>], params: &ModelParams) -> Result<Prediction> {
    Ok(forward(words, params, &mut Dropout::Off)?.prediction)
}

/// Backpropagates `dL/dp_i` for every word into a fresh gradient set.
pub fn backward(params: &ModelParams, cache: &SentenceCache, grad_word_probs: &[Vec<f64>]) -> ModelParams {
    let mut grads = params.zeros_like();
    let h = params.config.lstm_hidden;
    let peep = params.config.peepholes;
    let t = cache.outputs.len();
    let mut grad_fwd = Vec::with_capacity(t);
    let mut grad_bwd = Vec::with_capacity(t);
    for ((p, g), v) in cache.prediction.word_probs.iter().zip(grad_word_probs).zip(&cache.outputs) {
        let grad_logits = softmax_backward(p, g);
        let gv = affine_backward(v, &params.output_w, &grad_logits, &mut grads.output_w, &mut grads.output_b);
        grad_fwd.push(gv[..h].to_vec());
        grad_bwd.push(gv[h..].to_vec());
    }
    grad_bwd.reverse();
    let dx_fwd = lstm_backward(&params.lstm_fwd, &cache.fwd, &grad_fwd, peep, &mut grads.lstm_fwd);
    let mut dx_bwd = lstm_backward(&params.lstm_bwd, &cache.bwd, &grad_bwd, peep, &mut grads.lstm_bwd);
    dx_bwd.reverse();
    for i in 0..t {
        let mut dz: Vec<f64> = dx_fwd[i].iter().zip(&dx_bwd[i]).map(|(a, b)| a + b).collect();
        if let Some(mask) = &cache.lstm_masks[i] {
            dz.iter_mut().zip(&mask.0).for_each(|(g, m)| *g *= m);
        }
        char2vec_backward(params, &cache.words[i], &dz, &mut grads);
    }
    debug_assert_eq!(cache.inputs.len(), t);
    grads
}

/// Training target for one tweet.
#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    /// Distribution over labels for the tweet-level head.
    Sentence(Vec<f64>),
    /// One label index per word for the code-switch head.
    Words(Vec<usize>),
}

/// `-sum_l gold[l] ln p_S[l]`.
pub fn sentence_loss(pred: &Prediction, gold: &[f64]) -> f64 {
    cross_entropy(&pred.sentence, gold)
}

/// Sum over words of `-ln p_i[gold_i]`.
pub fn word_loss(pred: &Prediction, gold: &[usize]) -> Result<f64> {
    if gold.len() != pred.word_probs.len() {
        return Err(Error::shape(format!(
            "{} word labels for {} words",
            gold.len(),
            pred.word_probs.len()
        )));
    }
    Ok(pred
        .word_probs
        .iter()
        .zip(gold)
        .map(|(p, &g)| -p[g].max(LOG_FLOOR).ln())
        .sum())
}

/// Loss for a target and `dL/dp_i` for every word.
pub fn loss_with_grad(pred: &Prediction, target: &Target) -> Result<(f64, Vec<Vec<f64>>)> {
    match target {
        Target::Sentence(gold) => {
            if gold.len() != pred.sentence.len() {
                return Err(Error::shape("gold distribution size differs from label count"));
            }
            let t = pred.word_probs.len() as f64;
            let g: Vec<f64> = cross_entropy_backward(&pred.sentence, gold).into_iter().map(|v| v / t).collect();
            Ok((sentence_loss(pred, gold), vec![g; pred.word_probs.len()]))
        }
        Target::Words(gold) => {
            let loss = word_loss(pred, gold)?;
            let grads = pred
                .word_probs
                .iter()
                .zip(gold)
                .map(|(p, &g)| {
                    let mut onehot = vec![0.0; p.len()];
                    onehot[g] = 1.0;
                    cross_entropy_backward(p, &onehot)
                })
                .collect();
            Ok((loss, grads))
        }
    }
}

/// Forward plus backward for one tweet.
pub fn loss_and_grad(words: &[Vec<u32>], target: &Target, params: &ModelParams, dropout: &mut Dropout) -> Result<(f64, ModelParams, SentenceCache)> {
    let cache = forward(words, params, dropout)?;
    let (loss, grad_p) = loss_with_grad(&cache.prediction, target)?;
    let grads = backward(params, &cache, &grad_p);
    Ok((loss, grads, cache))
}

/// Loss only.
pub fn loss(words: &[Vec<u32>], target: &Target, params: &ModelParams, dropout: &mut Dropout) -> Result<f64> {
    let cache = forward(words, params, dropout)?;
    Ok(loss_with_grad(&cache.prediction, target)?.0)
}

/// How a tweet distribution becomes a label set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Decode {
    Argmax,
    /// Every label with probability at least the threshold, or the argmax if
    /// none qualifies.
    Threshold(f64),
}

/// Label set for a tweet. A selected `und` suppresses every other label.
pub fn decode_labels(pred: &Prediction, labels: &[String], mode: Decode) -> BTreeSet<String> {
    let best = || BTreeSet::from([labels[argmax(&pred.sentence)].clone()]);
    let mut out = match mode {
        Decode::Argmax => best(),
        Decode::Threshold(theta) => {
            let chosen: BTreeSet<String> = pred
                .sentence
                .iter()
                .zip(labels)
                .filter(|(p, _)| **p >= theta)
                .map(|(_, l)| l.clone())
                .collect();
            if chosen.is_empty() {
                best()
            } else {
                chosen
            }
        }
    };
    if out.contains(UND) {
        out = BTreeSet::from([UND.to_string()]);
    }
    out
}

/// Gold distribution over `labels` for a gold label set: uniform over its
/// classes.
pub fn soft_target(classes: &[String], labels: &[String]) -> Result<Vec<f64>> {
    let mut target = vec![0.0; labels.len()];
    for c in classes {
        let i = labels
            .iter()
            .position(|l| l == c)
            .ok_or_else(|| Error::invalid(format!("label `{c}` is not in the model's label set")))?;
        target[i] = 1.0;
    }
    let n = classes.len() as f64;
    target.iter_mut().for_each(|v| *v /= n);
    Ok(target)
}
