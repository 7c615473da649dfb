//! Character n-gram language models with Witten-Bell smoothing, and the
//! Bayes classifier built from one model per language.
//!
//! Each tweet is an independent event sequence: its characters (tokens joined
//! by single spaces) followed by an end symbol, conditioned on a begin symbol.
//! For a context `c` with back-off context `c'`,
//!
//! ```text
//! P(w | c) = (count(c, w) + T(c) * P(w | c')) / (count(c) + T(c))
//! ```
//!
//! where `T(c)` is the number of distinct symbols seen after `c`. A context
//! never seen in training backs off unchanged. Below the unigram level sits a
//! uniform distribution over the symbols the unigram level never saw
//! (at least `<unk>`), so the unigram level's unseen mass goes to them.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use log::{info, warn};

use crate::data::TextRecord;
use crate::error::{Error, Result};
use crate::eval::{score_tweetlid, GoldLabel, LabelKind, UND};
use crate::text::{normalize_lossy, NormalizedText};

pub type Symbol = u32;

pub const UNK_SYMBOL: Symbol = 0;
pub const BOS_SYMBOL: Symbol = 1;
pub const EOS_SYMBOL: Symbol = 2;
const FIRST_CHAR_SYMBOL: Symbol = 3;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct ContextCounts {
    total: u64,
    next: HashMap<Symbol, u64>,
}

impl ContextCounts {
    fn types(&self) -> u64 {
        self.next.len() as u64
    }

    fn get(&self, sym: Symbol) -> u64 {
        self.next.get(&sym).copied().unwrap_or(0)
    }
}

/// A Witten-Bell smoothed character n-gram model.
#[derive(Debug, Clone, PartialEq)]
pub struct NgramModel {
    order: usize,
    chars: Vec<char>,
    char_index: HashMap<char, Symbol>,
    contexts: HashMap<Vec<Symbol>, ContextCounts>,
    // probability of each symbol unseen at the unigram level
    floor: f64,
}

/// Anything that assigns a probability to each event of a tweet.
pub trait CharModel {
    /// Probability of each event: one per character, then the end symbol.
    fn event_probs(&self, text: &NormalizedText) -> Vec<f64>;

    /// Total log probability in nats.
    fn log_prob(&self, text: &NormalizedText) -> f64 {
        self.event_probs(text).iter().map(|p| p.ln()).sum()
    }
}

/// Number of scored events in a tweet: its characters plus the end symbol.
pub fn event_count(text: &NormalizedText) -> usize {
    text.joined().chars().count() + 1
}

impl NgramModel {
    pub fn order(&self) -> usize {
        self.order
    }

    /// Size of the predicted vocabulary: characters, `<unk>` and `</s>`.
    pub fn vocab_size(&self) -> usize {
        self.chars.len() + 2
    }

    pub fn symbol(&self, ch: char) -> Symbol {
        self.char_index.get(&ch).copied().unwrap_or(UNK_SYMBOL)
    }

    /// Every symbol the model can predict.
    pub fn predictable(&self) -> Vec<Symbol> {
        let mut out = vec![UNK_SYMBOL, EOS_SYMBOL];
        out.extend(FIRST_CHAR_SYMBOL..FIRST_CHAR_SYMBOL + self.chars.len() as Symbol);
        out
    }

    /// Histories observed in training (each at most `order - 1` long).
    pub fn observed_contexts(&self) -> Vec<Vec<Symbol>> {
        let mut ctx: Vec<Vec<Symbol>> = self.contexts.keys().cloned().collect();
        ctx.sort();
        ctx
    }

    fn base_prob(&self, sym: Symbol) -> f64 {
        match self.contexts.get(&[][..]) {
            Some(uni) if uni.get(sym) > 0 => 0.0,
            _ => self.floor,
        }
    }

    /// Smoothed `P(sym | history)`; only the last `order - 1` symbols of the
    /// history matter.
    pub fn prob(&self, history: &[Symbol], sym: Symbol) -> f64 {
        let keep = history.len().min(self.order - 1);
        let history = &history[history.len() - keep..];
        let mut p = self.base_prob(sym);
        for k in 0..=keep {
            match self.contexts.get(&history[keep - k..]) {
                Some(cc) => {
                    let t = cc.types() as f64;
                    p = (cc.get(sym) as f64 + t * p) / (cc.total as f64 + t);
                }
                None => break,
            }
        }
        p
    }

    fn symbols(&self, text: &NormalizedText) -> Vec<Symbol> {
        let mut syms: Vec<Symbol> = text.joined().chars().map(|c| self.symbol(c)).collect();
        syms.push(EOS_SYMBOL);
        syms
    }

    fn recompute_floor(&mut self) {
        let seen = self.contexts.get(&[][..]).map_or(0, |c| c.types() as usize);
        let unseen = self.vocab_size().saturating_sub(seen);
        self.floor = if unseen == 0 { 0.0 } else { 1.0 / unseen as f64 };
    }
}

impl CharModel for NgramModel {
    fn event_probs(&self, text: &NormalizedText) -> Vec<f64> {
        let syms = self.symbols(text);
        let mut history = Vec::with_capacity(syms.len() + 1);
        history.push(BOS_SYMBOL);
        let mut out = Vec::with_capacity(syms.len());
        for &s in &syms {
            out.push(self.prob(&history, s));
            history.push(s);
        }
        out
    }
}

/// Trains an order-`n` model over a corpus of tweets.
pub fn train_lm<'a, I>(corpus: I, n: usize) -> Result<NgramModel>
where
    I: IntoIterator<Item = &'a NormalizedText>,
{
    if n < 1 {
        return Err(Error::invalid("n-gram order must be at least 1"));
    }
    let texts: Vec<&NormalizedText> = corpus.into_iter().collect();
    if texts.is_empty() {
        return Err(Error::EmptyCorpus("language model"));
    }
    let mut chars: Vec<char> = texts.iter().flat_map(|t| t.joined().chars().collect::<Vec<_>>()).collect();
    chars.sort_unstable();
    chars.dedup();
    let char_index = chars
        .iter()
        .enumerate()
        .map(|(i, &c)| (c, FIRST_CHAR_SYMBOL + i as Symbol))
        .collect();
    let mut model = NgramModel {
        order: n,
        chars,
        char_index,
        contexts: HashMap::new(),
        floor: 0.0,
    };
    for text in texts {
        let syms = model.symbols(text);
        let mut history = vec![BOS_SYMBOL];
        for &s in &syms {
            let keep = history.len().min(n - 1);
            for k in 0..=keep {
                let ctx = &history[history.len() - k..];
                let cc = model.contexts.entry(ctx.to_vec()).or_default();
                cc.total += 1;
                *cc.next.entry(s).or_insert(0) += 1;
            }
            history.push(s);
        }
    }
    model.recompute_floor();
    Ok(model)
}

/// Per-event perplexity of a model over a corpus.
pub fn perplexity<M: CharModel + ?Sized>(model: &M, corpus: &[NormalizedText]) -> Result<f64> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus("perplexity"));
    }
    let (mut lp, mut events) = (0.0, 0usize);
    for text in corpus {
        let probs = model.event_probs(text);
        events += probs.len();
        lp += probs.iter().map(|p| p.ln()).sum::<f64>();
    }
    Ok((-lp / events as f64).exp())
}

/// Linear mixture of n-gram models, mixed at the probability level.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpolatedModel {
    components: Vec<(NgramModel, f64)>,
}

impl InterpolatedModel {
    pub fn new(components: Vec<(NgramModel, f64)>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::invalid("mixture needs at least one component"));
        }
        if components.iter().any(|(_, w)| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::invalid("mixture weights must be finite and nonnegative"));
        }
        let sum: f64 = components.iter().map(|(_, w)| w).sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("mixture weights sum to {sum}, not 1")));
        }
        Ok(InterpolatedModel { components })
    }

    pub fn components(&self) -> &[(NgramModel, f64)] {
        &self.components
    }

    pub fn weights(&self) -> Vec<f64> {
        self.components.iter().map(|(_, w)| *w).collect()
    }
}

impl CharModel for InterpolatedModel {
    fn event_probs(&self, text: &NormalizedText) -> Vec<f64> {
        let mut mixed = vec![0.0; event_count(text)];
        for (model, weight) in &self.components {
            for (m, p) in mixed.iter_mut().zip(model.event_probs(text)) {
                *m += weight * p;
            }
        }
        mixed
    }
}

/// Model for one language: plain or interpolated.
#[derive(Debug, Clone, PartialEq)]
pub enum LanguageModel {
    Ngram(NgramModel),
    Interpolated(InterpolatedModel),
}

impl CharModel for LanguageModel {
    fn event_probs(&self, text: &NormalizedText) -> Vec<f64> {
        match self {
            LanguageModel::Ngram(m) => m.event_probs(text),
            LanguageModel::Interpolated(m) => m.event_probs(text),
        }
    }
}

/// Bayes decision with a uniform prior: the language whose model gives the
/// text the highest probability. Ties go to the lexicographically first code.
pub fn classify<'m, M: CharModel>(models: &'m BTreeMap<String, M>, text: &NormalizedText) -> Result<(&'m str, f64)> {
    let mut best: Option<(&str, f64)> = None;
    for (lang, model) in models {
        let lp = model.log_prob(text);
        if best.is_none_or(|(_, b)| lp > b) {
            best = Some((lang, lp));
        }
    }
    best.ok_or_else(|| Error::invalid("no language models to classify with"))
}

/// Log-likelihood-ratio test against an `und` model.
#[derive(Debug, Clone, PartialEq)]
pub struct RejectionModel {
    /// Per-event log-likelihood-ratio cutoff, in nats.
    pub threshold: f64,
    pub und_model: LanguageModel,
}

impl RejectionModel {
    /// `(log p(text | lang) - log p(text | und)) / events`.
    pub fn llr(&self, lang_log_prob: f64, text: &NormalizedText) -> f64 {
        (lang_log_prob - self.und_model.log_prob(text)) / event_count(text) as f64
    }
}

/// Like [`classify`], but answers `und` when the winning language does not
/// beat the `und` model by at least the threshold.
pub fn classify_with_rejection<M: CharModel>(
    models: &BTreeMap<String, M>,
    rejection: &RejectionModel,
    text: &NormalizedText,
) -> Result<String> {
    let (lang, lp) = classify(models, text)?;
    if rejection.llr(lp, text) < rejection.threshold {
        Ok(UND.to_string())
    } else {
        Ok(lang.to_string())
    }
}

/// Picks the threshold that maximizes macro-F1 on a labeled dev set.
///
/// Candidates are the observed per-event LLRs plus both infinities; the
/// smallest best candidate wins. Without any `und` example the result is
/// negative infinity (never reject).
pub fn tune_threshold<M: CharModel>(models: &BTreeMap<String, M>, und_model: &LanguageModel, dev: &[TextRecord]) -> Result<f64> {
    if !dev.iter().any(|r| r.label.kind() == LabelKind::Und) {
        warn!("dev set has no `und` example; rejection disabled");
        return Ok(f64::NEG_INFINITY);
    }
    let probe = RejectionModel {
        threshold: 0.0,
        und_model: und_model.clone(),
    };
    let mut decisions = Vec::with_capacity(dev.len());
    for r in dev {
        let text = normalize_lossy(&r.text);
        let (lang, lp) = classify(models, &text)?;
        decisions.push((lang.to_string(), probe.llr(lp, &text)));
    }
    let gold: Vec<GoldLabel> = dev.iter().map(|r| r.label.clone()).collect();
    let mut candidates: Vec<f64> = decisions.iter().map(|d| d.1).collect();
    candidates.push(f64::NEG_INFINITY);
    candidates.push(f64::INFINITY);
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();

    let mut best = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &tau in &candidates {
        let preds: Vec<_> = decisions
            .iter()
            .map(|(lang, llr)| {
                let label = if *llr < tau { UND } else { lang.as_str() };
                std::collections::BTreeSet::from([label.to_string()])
            })
            .collect();
        let f = score_tweetlid(&gold, &preds)?.macro_f1;
        if f > best.1 {
            best = (tau, f);
        }
    }
    Ok(best.0)
}

/// Number of cross-validation folds used by [`select_order`].
pub const FOLDS: usize = 5;

/// Chooses the order with the lowest mean held-out perplexity over five
/// folds (example `i` is held out in fold `i % 5`). Ties go to the smaller
/// order.
pub fn select_order(corpus: &[NormalizedText], candidates: &[usize]) -> Result<usize> {
    if corpus.len() < FOLDS {
        return Err(Error::invalid(format!("need at least {FOLDS} examples for cross-validation")));
    }
    let mut orders = candidates.to_vec();
    orders.sort_unstable();
    orders.dedup();
    match orders.as_slice() {
        [] => return Err(Error::invalid("no candidate orders")),
        [only] => return Ok(*only),
        _ => {}
    }
    let mut best: Option<(usize, f64)> = None;
    for &n in &orders {
        let ppl = cross_validated_perplexity(corpus, n)?;
        log::debug!("order {n}: cross-validated perplexity {ppl:.4}");
        if best.is_none_or(|(_, b)| ppl < b) {
            best = Some((n, ppl));
        }
    }
    Ok(best.expect("at least two orders").0)
}

/// Mean of the five held-out per-event perplexities for order `n`.
pub fn cross_validated_perplexity(corpus: &[NormalizedText], n: usize) -> Result<f64> {
    let mut total = 0.0;
    for fold in 0..FOLDS {
        let train = corpus.iter().enumerate().filter(|(i, _)| i % FOLDS != fold).map(|(_, t)| t);
        let held: Vec<NormalizedText> = corpus
            .iter()
            .enumerate()
            .filter(|(i, _)| i % FOLDS == fold)
            .map(|(_, t)| t.clone())
            .collect();
        let model = train_lm(train, n)?;
        total += perplexity(&model, &held)?;
    }
    Ok(total / FOLDS as f64)
}

/// Mixture weights minimizing dev perplexity.
///
/// Two components: grid search in steps of 0.01, near-ties resolved toward
/// equal weights. More components: EM from uniform weights.
pub fn fit_interpolation(dev: &[NormalizedText], components: &[NgramModel]) -> Result<Vec<f64>> {
    if dev.is_empty() {
        return Err(Error::EmptyCorpus("interpolation dev set"));
    }
    if components.len() < 2 {
        return Err(Error::invalid("interpolation needs at least two components"));
    }
    // probs[k][e]: component k's probability of dev event e
    let probs: Vec<Vec<f64>> = components
        .iter()
        .map(|m| dev.iter().flat_map(|t| m.event_probs(t)).collect())
        .collect();
    if components.len() == 2 {
        let loglik = |w: f64| -> f64 {
            probs[0]
                .iter()
                .zip(&probs[1])
                .map(|(a, b)| (w * a + (1.0 - w) * b).ln())
                .sum()
        };
        let mut best: (f64, f64) = (0.5, loglik(0.5));
        for step in 0..=100 {
            let w = step as f64 / 100.0;
            let ll = loglik(w);
            let tol = 1e-12 * (1.0 + best.1.abs());
            let better = ll > best.1 + tol;
            let tie_closer = (ll - best.1).abs() <= tol && (w - 0.5).abs() < (best.0 - 0.5).abs();
            if better || tie_closer {
                best = (w, ll);
            }
        }
        return Ok(vec![best.0, 1.0 - best.0]);
    }
    let k = components.len();
    let events = probs[0].len();
    // by_event[e][k]: component k's probability of event e
    let by_event: Vec<Vec<f64>> = (0..events).map(|e| probs.iter().map(|p| p[e]).collect()).collect();
    let mut weights = vec![1.0 / k as f64; k];
    for _ in 0..1000 {
        let mut next = vec![0.0; k];
        for col in &by_event {
            let mix: f64 = weights.iter().zip(col).map(|(w, p)| w * p).sum();
            for ((n, w), p) in next.iter_mut().zip(&weights).zip(col) {
                *n += w * p / mix;
            }
        }
        next.iter_mut().for_each(|w| *w /= events as f64);
        let delta = next.iter().zip(&weights).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        weights = next;
        if delta < 1e-10 {
            break;
        }
    }
    let sum: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= sum);
    Ok(weights)
}

/// Per-language models plus an optional `und` rejection model.
#[derive(Debug, Clone, PartialEq)]
pub struct NgramClassifier {
    pub models: BTreeMap<String, LanguageModel>,
    pub rejection: Option<RejectionModel>,
}

impl NgramClassifier {
    /// Trains one model per language from single-label records; ambiguous
    /// and code-switched records are skipped. Records labeled `und` train the
    /// rejection model (threshold starts at negative infinity).
    pub fn train(records: &[TextRecord], order: usize) -> Result<Self> {
        let mut by_lang: BTreeMap<String, Vec<NormalizedText>> = BTreeMap::new();
        let mut und = Vec::new();
        for r in records {
            match r.label.kind() {
                LabelKind::Single => by_lang
                    .entry(r.label.classes().remove(0))
                    .or_default()
                    .push(normalize_lossy(&r.text)),
                LabelKind::Und => und.push(normalize_lossy(&r.text)),
                LabelKind::Ambiguous | LabelKind::Multi => {}
            }
        }
        if by_lang.is_empty() {
            return Err(Error::EmptyCorpus("no single-language training records"));
        }
        let mut models = BTreeMap::new();
        for (lang, texts) in by_lang {
            models.insert(lang, LanguageModel::Ngram(train_lm(&texts, order)?));
        }
        let rejection = if und.is_empty() {
            None
        } else {
            Some(RejectionModel {
                threshold: f64::NEG_INFINITY,
                und_model: LanguageModel::Ngram(train_lm(&und, order)?),
            })
        };
        Ok(NgramClassifier { models, rejection })
    }

    /// Mixes each language's model with one trained on out-of-domain text,
    /// fitting the weights on that language's single-label dev tweets.
    /// Languages lacking either keep their plain model.
    pub fn interpolate(&mut self, out_of_domain: &[TextRecord], dev: &[TextRecord], order: usize) -> Result<()> {
        let single = |records: &[TextRecord]| {
            let mut by: BTreeMap<String, Vec<NormalizedText>> = BTreeMap::new();
            for r in records.iter().filter(|r| r.label.kind() == LabelKind::Single) {
                by.entry(r.label.classes().remove(0)).or_default().push(normalize_lossy(&r.text));
            }
            by
        };
        let ood = single(out_of_domain);
        let dev = single(dev);
        for (lang, model) in self.models.iter_mut() {
            let LanguageModel::Ngram(in_domain) = model else {
                continue;
            };
            let (Some(ood_texts), Some(dev_texts)) = (ood.get(lang), dev.get(lang)) else {
                warn!("{lang}: no out-of-domain or dev text; keeping the in-domain model");
                continue;
            };
            let components = vec![in_domain.clone(), train_lm(ood_texts, order)?];
            let weights = fit_interpolation(dev_texts, &components)?;
            info!("{lang}: interpolation weights {weights:?}");
            *model = LanguageModel::Interpolated(InterpolatedModel::new(components.into_iter().zip(weights).collect())?);
        }
        Ok(())
    }

    /// Tunes the rejection threshold on a dev set; no-op without a rejection model.
    pub fn tune_rejection(&mut self, dev: &[TextRecord]) -> Result<()> {
        if let Some(rej) = &self.rejection {
            let tau = tune_threshold(&self.models, &rej.und_model, dev)?;
            self.rejection.as_mut().expect("checked").threshold = tau;
        }
        Ok(())
    }

    pub fn predict(&self, text: &NormalizedText) -> Result<String> {
        match &self.rejection {
            Some(rej) => classify_with_rejection(&self.models, rej, text),
            None => classify(&self.models, text).map(|(l, _)| l.to_string()),
        }
    }

    /// Posterior over languages under a uniform prior, in model order.
    pub fn posterior(&self, text: &NormalizedText) -> Vec<(String, f64)> {
        let lps: Vec<(String, f64)> = self.models.iter().map(|(l, m)| (l.clone(), m.log_prob(text))).collect();
        let max = lps.iter().map(|x| x.1).fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = lps.iter().map(|x| (x.1 - max).exp()).sum();
        lps.into_iter().map(|(l, lp)| (l, (lp - max).exp() / z)).collect()
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        let mut s = String::new();
        let _ = writeln!(s, "{CLASSIFIER_MAGIC}");
        let _ = writeln!(s, "languages\t{}", self.models.len());
        match &self.rejection {
            Some(rej) => {
                let _ = writeln!(s, "rejection\t{:?}", rej.threshold);
                write_language_model(&mut s, UND, &rej.und_model);
            }
            None => {
                let _ = writeln!(s, "rejection\tnone");
            }
        }
        for (lang, model) in &self.models {
            write_language_model(&mut s, lang, model);
        }
        out.write_all(s.as_bytes())?;
        Ok(())
    }

    pub fn read<R: BufRead>(input: R) -> Result<Self> {
        let lines: Vec<String> = input.lines().collect::<std::io::Result<_>>()?;
        let mut cur = Cursor { lines: &lines, pos: 0 };
        cur.expect_exact(CLASSIFIER_MAGIC)?;
        let count: usize = cur.keyed("languages")?;
        let rejection = match cur.next_line()?.split_once('\t') {
            Some(("rejection", "none")) => None,
            Some(("rejection", tau)) => {
                let threshold: f64 = tau.parse().map_err(|_| cur.err("bad rejection threshold"))?;
                let (name, und_model) = read_language_model(&mut cur)?;
                if name != UND {
                    return Err(cur.err("rejection model must be named `und`"));
                }
                Some(RejectionModel { threshold, und_model })
            }
            _ => return Err(cur.err("expected `rejection`")),
        };
        let mut models = BTreeMap::new();
        for _ in 0..count {
            let (name, model) = read_language_model(&mut cur)?;
            models.insert(name, model);
        }
        if cur.pos != lines.len() {
            return Err(cur.err("trailing content"));
        }
        Ok(NgramClassifier { models, rejection })
    }
}

const CLASSIFIER_MAGIC: &str = "c2v2l-ngram-classifier v1";
const MODEL_MAGIC: &str = "ngram-model v1";

fn symbol_name(model: &NgramModel, sym: Symbol) -> String {
    match sym {
        UNK_SYMBOL => "<unk>".into(),
        BOS_SYMBOL => "<s>".into(),
        EOS_SYMBOL => "</s>".into(),
        s => format!("{:x}", model.chars[(s - FIRST_CHAR_SYMBOL) as usize] as u32),
    }
}

fn parse_symbol(model: &NgramModel, name: &str) -> Option<Symbol> {
    match name {
        "<unk>" => Some(UNK_SYMBOL),
        "<s>" => Some(BOS_SYMBOL),
        "</s>" => Some(EOS_SYMBOL),
        hex => {
            let ch = char::from_u32(u32::from_str_radix(hex, 16).ok()?)?;
            model.char_index.get(&ch).copied()
        }
    }
}

fn write_language_model(s: &mut String, lang: &str, model: &LanguageModel) {
    match model {
        LanguageModel::Ngram(m) => {
            let _ = writeln!(s, "language\t{lang}\tngram");
            write_ngram(s, m);
        }
        LanguageModel::Interpolated(mix) => {
            let _ = writeln!(s, "language\t{lang}\tmixture\t{}", mix.components.len());
            for (m, w) in &mix.components {
                let _ = writeln!(s, "weight\t{w:?}");
                write_ngram(s, m);
            }
        }
    }
}

fn write_ngram(s: &mut String, m: &NgramModel) {
    let _ = writeln!(s, "{MODEL_MAGIC}");
    let _ = writeln!(s, "order\t{}", m.order);
    let chars: Vec<String> = m.chars.iter().map(|c| format!("{:x}", *c as u32)).collect();
    let _ = writeln!(s, "chars\t{}", chars.join(" "));
    let contexts = m.observed_contexts();
    let _ = writeln!(s, "contexts\t{}", contexts.len());
    for ctx in contexts {
        let cc = &m.contexts[&ctx];
        let name = if ctx.is_empty() {
            "-".to_string()
        } else {
            ctx.iter().map(|&x| symbol_name(m, x)).collect::<Vec<_>>().join(",")
        };
        let mut next: Vec<(&Symbol, &u64)> = cc.next.iter().collect();
        next.sort();
        let counts: Vec<String> = next.iter().map(|(sym, n)| format!("{}:{}", symbol_name(m, **sym), n)).collect();
        let _ = writeln!(s, "{name}\t{}", counts.join(" "));
    }
    let _ = writeln!(s, "end-model");
}

struct Cursor<'a> {
    lines: &'a [String],
    pos: usize,
}

impl Cursor<'_> {
    fn err(&self, msg: &str) -> Error {
        Error::format(self.pos.max(1), msg)
    }

    fn next_line(&mut self) -> Result<&str> {
        let line = self.lines.get(self.pos).ok_or_else(|| Error::format(self.pos + 1, "unexpected end of file"))?;
        self.pos += 1;
        Ok(line)
    }

    fn expect_exact(&mut self, want: &str) -> Result<()> {
        if self.next_line()? != want {
            return Err(self.err(&format!("expected `{want}`")));
        }
        Ok(())
    }

    fn keyed<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        let line = self.next_line()?.to_string();
        line.strip_prefix(key)
            .and_then(|v| v.strip_prefix('\t'))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| self.err(&format!("expected `{key}`")))
    }
}

fn read_language_model(cur: &mut Cursor) -> Result<(String, LanguageModel)> {
    let header = cur.next_line()?.to_string();
    let fields: Vec<&str> = header.split('\t').collect();
    match fields.as_slice() {
        ["language", lang, "ngram"] => Ok((lang.to_string(), LanguageModel::Ngram(read_ngram(cur)?))),
        ["language", lang, "mixture", k] => {
            let k: usize = k.parse().map_err(|_| cur.err("bad component count"))?;
            let mut components = Vec::with_capacity(k);
            for _ in 0..k {
                let w: f64 = cur.keyed("weight")?;
                components.push((read_ngram(cur)?, w));
            }
            Ok((lang.to_string(), LanguageModel::Interpolated(InterpolatedModel::new(components)?)))
        }
        _ => Err(cur.err("expected `language` block")),
    }
}

fn read_ngram(cur: &mut Cursor) -> Result<NgramModel> {
    cur.expect_exact(MODEL_MAGIC)?;
    let order: usize = cur.keyed("order")?;
    if order < 1 {
        return Err(cur.err("order must be at least 1"));
    }
    let chars_line = cur.next_line()?.to_string();
    let chars_field = chars_line.strip_prefix("chars\t").ok_or_else(|| cur.err("expected `chars`"))?;
    let mut chars = Vec::new();
    for hex in chars_field.split(' ').filter(|h| !h.is_empty()) {
        let ch = u32::from_str_radix(hex, 16)
            .ok()
            .and_then(char::from_u32)
            .ok_or_else(|| cur.err("bad codepoint"))?;
        chars.push(ch);
    }
    if chars.windows(2).any(|w| w[0] >= w[1]) {
        return Err(cur.err("chars must be strictly increasing"));
    }
    let char_index = chars
        .iter()
        .enumerate()
        .map(|(i, &c)| (c, FIRST_CHAR_SYMBOL + i as Symbol))
        .collect();
    let mut model = NgramModel {
        order,
        chars,
        char_index,
        contexts: HashMap::new(),
        floor: 0.0,
    };
    let count: usize = cur.keyed("contexts")?;
    for _ in 0..count {
        let line = cur.next_line()?.to_string();
        let (name, counts) = line.split_once('\t').ok_or_else(|| cur.err("expected `context \\t counts`"))?;
        let ctx: Vec<Symbol> = if name == "-" {
            Vec::new()
        } else {
            name.split(',')
                .map(|s| parse_symbol(&model, s))
                .collect::<Option<_>>()
                .ok_or_else(|| cur.err("bad context symbol"))?
        };
        let mut cc = ContextCounts::default();
        for pair in counts.split(' ') {
            let (sym, n) = pair.rsplit_once(':').ok_or_else(|| cur.err("bad count pair"))?;
            let sym = parse_symbol(&model, sym).ok_or_else(|| cur.err("bad symbol"))?;
            let n: u64 = n.parse().map_err(|_| cur.err("bad count"))?;
            cc.total += n;
            cc.next.insert(sym, n);
        }
        model.contexts.insert(ctx, cc);
    }
    cur.expect_exact("end-model")?;
    model.recompute_floor();
    Ok(model)
}
