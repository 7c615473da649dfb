//! Minibatch training for both heads, corpus mixing, fine-tuning and random
//! hyperparameter search.

use std::collections::{BTreeSet, HashSet};
use std::io::Write;

use rand::{Rng as _, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{TaggedTweet, TextRecord};
use crate::error::{Error, Result};
use crate::eval::{score_tweetlid, score_words, GoldLabel, ScoreReport};
use crate::model::{self, decode_labels, soft_target, Decode, Dropout, ModelConfig, ModelParams, Prediction, Target};
use crate::nn::{adam_update, AdamState, Rng};
use crate::text::{normalize, CharVocab};

pub const DEFAULT_BATCH_SIZE: usize = 25;
pub const DEFAULT_LEARNING_RATE: f64 = 0.001;
pub const DEFAULT_FINE_TUNE_STEPS: u64 = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Head {
    /// Tweet-level classification from the averaged word predictions.
    Sentence,
    /// Per-word tagging.
    Word,
}

impl std::fmt::Display for Head {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Head::Sentence => "sentence",
            Head::Word => "word",
        })
    }
}

impl std::str::FromStr for Head {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sentence" => Ok(Head::Sentence),
            "word" => Ok(Head::Word),
            _ => Err(Error::invalid(format!("unknown head `{s}` (expected sentence or word)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub steps: u64,
    pub dropout: f64,
    pub seed: u64,
    pub head: Head,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: DEFAULT_BATCH_SIZE,
            learning_rate: DEFAULT_LEARNING_RATE,
            steps: 80_000,
            dropout: 0.25,
            seed: 0,
            head: Head::Sentence,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid(format!("dropout {} is outside [0, 1)", self.dropout)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        Ok(())
    }
}

/// One encoded training example.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub id: String,
    pub words: Vec<Vec<u32>>,
    pub target: Target,
}

/// Normalizes a tweet and maps each token to character indices.
pub fn encode_text(vocab: &CharVocab, text: &str) -> Result<Vec<Vec<u32>>> {
    Ok(normalize(text)?.tokens().iter().map(|t| vocab.encode(t)).collect())
}

/// Sorted union of the classes a sentence model must output.
pub fn sentence_labels(records: &[TextRecord]) -> Vec<String> {
    let set: BTreeSet<String> = records.iter().flat_map(|r| r.label.classes()).collect();
    set.into_iter().collect()
}

/// Encodes labeled tweets against `labels`. Tweets that normalize to nothing
/// are skipped with a warning.
pub fn sentence_examples(records: &[TextRecord], vocab: &CharVocab, labels: &[String]) -> Result<Vec<Example>> {
    let mut out = Vec::with_capacity(records.len());
    for r in records {
        let words = match encode_text(vocab, &r.text) {
            Ok(w) => w,
            Err(Error::EmptyText) => {
                log::warn!("skipping tweet {}: empty after normalization", r.id);
                continue;
            }
            Err(e) => return Err(e),
        };
        out.push(Example {
            id: r.id.clone(),
            words,
            target: Target::Sentence(soft_target(&r.label.classes(), labels)?),
        });
    }
    Ok(out)
}

/// Sorted set of word tags.
pub fn word_labels(tweets: &[TaggedTweet]) -> Vec<String> {
    let set: BTreeSet<&String> = tweets.iter().flat_map(|t| &t.tags).collect();
    set.into_iter().cloned().collect()
}

/// Identity of a tagged tweet for disjointness checks: its tokens.
pub fn tagged_id(tweet: &TaggedTweet) -> String {
    tweet.tokens.join(" ")
}

/// Encodes word-tagged tweets. Tokens are used as given, one word each.
pub fn word_examples(tweets: &[TaggedTweet], vocab: &CharVocab, labels: &[String]) -> Result<Vec<Example>> {
    tweets
        .iter()
        .map(|t| {
            let tags = t
                .tags
                .iter()
                .map(|tag| {
                    labels
                        .iter()
                        .position(|l| l == tag)
                        .ok_or_else(|| Error::invalid(format!("tag `{tag}` is not in the model's label set")))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Example {
                id: tagged_id(t),
                words: t.tokens.iter().map(|w| vocab.encode(w)).collect(),
                target: Target::Words(tags),
            })
        })
        .collect()
}

/// Several corpora sampled in proportion to `weight × size`.
#[derive(Debug, Clone, Default)]
pub struct MixedCorpus {
    sources: Vec<(Vec<Example>, f64)>,
}

impl MixedCorpus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn single(examples: Vec<Example>) -> Result<Self> {
        let mut c = Self::new();
        c.add(examples, 1.0)?;
        Ok(c)
    }

    pub fn add(&mut self, examples: Vec<Example>, weight: f64) -> Result<()> {
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(Error::invalid(format!("corpus weight must be positive, got {weight}")));
        }
        if examples.is_empty() {
            return Err(Error::EmptyCorpus("training source"));
        }
        self.sources.push((examples, weight));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.sources.iter().map(|(e, _)| e.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }

    pub fn examples(&self) -> impl Iterator<Item = &Example> {
        self.sources.iter().flat_map(|(e, _)| e)
    }

    /// Probability of drawing from each source.
    pub fn source_probabilities(&self) -> Vec<f64> {
        let mass: Vec<f64> = self.sources.iter().map(|(e, w)| w * e.len() as f64).collect();
        let total: f64 = mass.iter().sum();
        mass.iter().map(|m| m / total).collect()
    }

    /// Draws `(source index, example)`.
    pub fn sample(&self, rng: &mut Rng) -> (usize, &Example) {
        let probs = self.source_probabilities();
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut src = probs.len() - 1;
        for (i, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                src = i;
                break;
            }
        }
        let examples = &self.sources[src].0;
        (src, &examples[rng.gen_range(0..examples.len())])
    }
}

/// Fails if any training example id is in `held_out`.
pub fn check_disjoint(corpus: &MixedCorpus, held_out: &HashSet<String>) -> Result<()> {
    if let Some(e) = corpus.examples().find(|e| held_out.contains(&e.id)) {
        return Err(Error::Leakage(e.id.clone()));
    }
    Ok(())
}

/// Progress after one optimizer step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    /// 1-based step number.
    pub step: u64,
    /// Mean loss over the minibatch.
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    /// Minibatch mean loss of every step.
    pub losses: Vec<f64>,
}

/// Trains for exactly `config.steps` Adam steps with fresh optimizer state.
pub fn train(params: ModelParams, corpus: &MixedCorpus, config: &TrainConfig, held_out: &HashSet<String>) -> Result<TrainOutcome> {
    train_with(params, corpus, config, held_out, |_, _| {})
}

/// [`train`] with a callback after every step, e.g. for periodic dev
/// evaluation.
pub fn train_with<F>(
    mut params: ModelParams,
    corpus: &MixedCorpus,
    config: &TrainConfig,
    held_out: &HashSet<String>,
    mut observe: F,
) -> Result<TrainOutcome>
where
    F: FnMut(&StepInfo, &ModelParams),
{
    config.validate()?;
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus("training corpus"));
    }
    check_disjoint(corpus, held_out)?;
    let mut rng = Rng::seed_from_u64(config.seed);
    let mut adam = AdamState::new(config.learning_rate, params.tensors());
    let mut losses = Vec::with_capacity(config.steps as usize);
    for step in 1..=config.steps {
        let batch: Vec<(&Example, u64)> = (0..config.batch_size)
            .map(|_| {
                let (_, ex) = corpus.sample(&mut rng);
                (ex, rng.gen())
            })
            .collect();
        let results: Vec<Result<(f64, ModelParams)>> = batch
            .par_iter()
            .map(|(ex, seed)| {
                let mut ex_rng = Rng::seed_from_u64(*seed);
                let mut dropout = if config.dropout > 0.0 {
                    Dropout::Sample { rate: config.dropout, rng: &mut ex_rng }
                } else {
                    Dropout::Off
                };
                let (loss, grads, _) = model::loss_and_grad(&ex.words, &ex.target, &params, &mut dropout)?;
                Ok((loss, grads))
            })
            .collect();
        let mut total = 0.0;
        let mut grads = params.zeros_like();
        for r in results {
            let (loss, g) = r?;
            total += loss;
            grads.add_assign(&g);
        }
        let loss = total / batch.len() as f64;
        grads.scale(1.0 / batch.len() as f64);
        if !loss.is_finite() || !grads.is_finite() {
            return Err(Error::NonFiniteLoss {
                step,
                batch_ids: batch.iter().map(|(e, _)| e.id.clone()).collect(),
            });
        }
        adam_update(&mut params.tensors_mut(), &grads.tensors(), &mut adam)?;
        losses.push(loss);
        let info = StepInfo { step, loss };
        log::debug!("step {step} loss {loss:.6}");
        observe(&info, &params);
    }
    Ok(TrainOutcome { params, losses })
}

/// Continues training on an in-domain corpus with fresh Adam moments.
pub fn fine_tune(params: ModelParams, corpus: &MixedCorpus, config: &TrainConfig, held_out: &HashSet<String>) -> Result<TrainOutcome> {
    train(params, corpus, config, held_out)
}

/// Eval-mode predictions, in input order.
pub fn predict_all(params: &ModelParams, inputs: &[Vec<Vec<u32>>]) -> Result<Vec<Prediction>> {
    inputs.par_iter().map(|w| model::predict_sentence(w, params)).collect()
}

/// Tweet-level scores of a sentence-head model on encoded dev tweets.
pub fn evaluate_sentences(
    params: &ModelParams,
    labels: &[String],
    dev: &[(Vec<Vec<u32>>, GoldLabel)],
    decode: Decode,
) -> Result<ScoreReport> {
    let inputs: Vec<Vec<Vec<u32>>> = dev.iter().map(|(w, _)| w.clone()).collect();
    let preds = predict_all(params, &inputs)?;
    let sets: Vec<BTreeSet<String>> = preds.iter().map(|p| decode_labels(p, labels, decode)).collect();
    let gold: Vec<GoldLabel> = dev.iter().map(|(_, g)| g.clone()).collect();
    score_tweetlid(&gold, &sets)
}

/// Word-level scores of a word-head model on encoded examples.
pub fn evaluate_words(params: &ModelParams, labels: &[String], dev: &[Example]) -> Result<ScoreReport> {
    let inputs: Vec<Vec<Vec<u32>>> = dev.iter().map(|e| e.words.clone()).collect();
    let preds = predict_all(params, &inputs)?;
    let mut gold = Vec::new();
    let mut pred = Vec::new();
    for (ex, p) in dev.iter().zip(&preds) {
        let Target::Words(tags) = &ex.target else {
            return Err(Error::invalid("word evaluation needs word-level targets"));
        };
        gold.extend(tags.iter().map(|&t| labels[t].as_str()));
        pred.extend(p.word_argmax().into_iter().map(|t| labels[t].as_str()));
    }
    score_words(&gold, &pred)
}

/// Bounds of the four tuned hyperparameters (inclusive).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub conv1_filters: (usize, usize),
    pub conv2_filters: (usize, usize),
    pub lstm_hidden: (usize, usize),
    pub dropout: (f64, f64),
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            conv1_filters: (30, 100),
            conv2_filters: (50, 150),
            lstm_hidden: (15, 60),
            dropout: (0.1, 0.4),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub conv1_filters: usize,
    pub conv2_filters: usize,
    pub lstm_hidden: usize,
    pub dropout: f64,
}

impl HyperParams {
    pub fn model_config(&self, vocab: &CharVocab, num_labels: usize) -> ModelConfig {
        ModelConfig {
            vocab_size: vocab.len(),
            char_dim: vocab.dim(),
            conv1_filters: self.conv1_filters,
            conv2_filters: self.conv2_filters,
            lstm_hidden: self.lstm_hidden,
            num_labels,
            peepholes: true,
        }
    }
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        let int_ok = |(lo, hi): (usize, usize)| lo >= 1 && lo <= hi;
        if !int_ok(self.conv1_filters) || !int_ok(self.conv2_filters) || !int_ok(self.lstm_hidden) {
            return Err(Error::invalid("search ranges must satisfy 1 <= low <= high"));
        }
        let (lo, hi) = self.dropout;
        if !(0.0 <= lo && lo <= hi && hi < 1.0) {
            return Err(Error::invalid("dropout range must lie in [0, 1)"));
        }
        Ok(())
    }

    pub fn sample(&self, rng: &mut Rng) -> HyperParams {
        let (lo, hi) = self.dropout;
        HyperParams {
            conv1_filters: rng.gen_range(self.conv1_filters.0..=self.conv1_filters.1),
            conv2_filters: rng.gen_range(self.conv2_filters.0..=self.conv2_filters.1),
            lstm_hidden: rng.gen_range(self.lstm_hidden.0..=self.lstm_hidden.1),
            dropout: if lo == hi { lo } else { rng.gen_range(lo..hi) },
        }
    }
}

/// One record of the trial log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    pub hyper: HyperParams,
    pub seed: u64,
    pub metric: f64,
    pub checkpoint: Option<String>,
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    pub trials: Vec<Trial>,
    /// Index of the trial with the highest metric (earliest on ties).
    pub best: usize,
}

impl SearchResult {
    pub fn best_trial(&self) -> &Trial {
        &self.trials[self.best]
    }
}

/// Samples `k` hyperparameter settings and per-trial seeds from `seed`.
pub fn sample_trials(space: &SearchSpace, k: usize, seed: u64) -> Result<Vec<(HyperParams, u64)>> {
    space.validate()?;
    let mut rng = Rng::seed_from_u64(seed);
    Ok((0..k).map(|_| (space.sample(&mut rng), rng.gen())).collect())
}

/// Runs `k` trials in parallel and keeps the best by dev metric.
/// `run` trains and scores one trial, returning the metric and an optional
/// checkpoint path.
pub fn random_search<F>(space: &SearchSpace, k: usize, seed: u64, run: F) -> Result<SearchResult>
where
    F: Fn(usize, &HyperParams, u64) -> Result<(f64, Option<String>)> + Sync,
{
    if k == 0 {
        return Err(Error::invalid("random search needs at least one trial"));
    }
    let plans = sample_trials(space, k, seed)?;
    let trials = plans
        .par_iter()
        .enumerate()
        .map(|(index, (hyper, trial_seed))| {
            let (metric, checkpoint) = run(index, hyper, *trial_seed)?;
            log::info!("trial {index}: {hyper:?} -> {metric:.6}");
            Ok(Trial {
                index,
                hyper: *hyper,
                seed: *trial_seed,
                metric,
                checkpoint,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for (i, t) in trials.iter().enumerate() {
        if t.metric > trials[best].metric {
            best = i;
        }
    }
    Ok(SearchResult { trials, best })
}

/// Writes one JSON object per trial.
pub fn write_trial_log<W: Write>(mut out: W, trials: &[Trial]) -> Result<()> {
    for t in trials {
        let line = serde_json::to_string(t).map_err(|e| Error::invalid(e.to_string()))?;
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn read_trial_log(text: &str) -> Result<Vec<Trial>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::format(i + 1, e.to_string())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example(id: &str) -> Example {
        Example {
            id: id.into(),
            words: vec![vec![2]],
            target: Target::Sentence(vec![1.0]),
        }
    }

    #[test]
    fn weighted_sampling_frequency() {
        let mut corpus = MixedCorpus::new();
        corpus.add((0..50).map(|i| example(&format!("a{i}"))).collect(), 10.0).unwrap();
        corpus.add((0..50).map(|i| example(&format!("b{i}"))).collect(), 1.0).unwrap();
        let mut rng = Rng::seed_from_u64(5);
        let draws = 100_000;
        let first = (0..draws).filter(|_| corpus.sample(&mut rng).0 == 0).count();
        let freq = first as f64 / draws as f64;
        assert!((freq - 10.0 / 11.0).abs() < 0.01, "{freq}");
    }

    #[test]
    fn rejects_bad_sources() {
        let mut c = MixedCorpus::new();
        assert!(c.add(vec![example("x")], 0.0).is_err());
        assert!(c.add(vec![], 1.0).is_err());
    }

    #[test]
    fn leakage_is_detected() {
        let corpus = MixedCorpus::single(vec![example("1"), example("2")]).unwrap();
        let held: HashSet<String> = ["2".to_string()].into();
        assert!(matches!(check_disjoint(&corpus, &held), Err(Error::Leakage(id)) if id == "2"));
    }

    #[test]
    fn config_validation() {
        let mut c = TrainConfig::default();
        assert!(c.validate().is_ok());
        c.dropout = 1.0;
        assert!(c.validate().is_err());
        c.dropout = 0.0;
        c.batch_size = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn degenerate_space_repeats_its_point() {
        let space = SearchSpace {
            conv1_filters: (7, 7),
            conv2_filters: (8, 8),
            lstm_hidden: (9, 9),
            dropout: (0.2, 0.2),
        };
        let plans = sample_trials(&space, 4, 1).unwrap();
        assert!(plans.iter().all(|(h, _)| *h == plans[0].0));
        assert_eq!(plans[0].0.dropout, 0.2);
    }

    #[test]
    fn search_picks_best_and_logs_roundtrip() {
        let result = random_search(&SearchSpace::default(), 5, 9, |i, _, _| Ok((if i == 3 { 0.9 } else { 0.1 }, None))).unwrap();
        assert_eq!(result.best, 3);
        let mut buf = Vec::new();
        write_trial_log(&mut buf, &result.trials).unwrap();
        let back = read_trial_log(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back, result.trials);
    }

    #[test]
    fn head_parsing() {
        assert_eq!("word".parse::<Head>().unwrap(), Head::Word);
        assert!("both".parse::<Head>().is_err());
    }
}
