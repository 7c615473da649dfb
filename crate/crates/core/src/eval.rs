//! Scoring under shared-task semantics (ambiguous and code-switched gold
//! labels), plain single-label scoring and token-level scoring.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};

use log::warn;

use crate::error::{Error, Result};

/// Label of the undetermined-language class.
pub const UND: &str = "und";
/// Category name under which ambiguous gold examples are tallied.
pub const AMB: &str = "amb";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LabelKind {
    Single,
    Ambiguous,
    Multi,
    Und,
}

/// Gold annotation of one tweet.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GoldLabel {
    kind: LabelKind,
    languages: BTreeSet<String>,
}

impl GoldLabel {
    pub fn single(lang: impl Into<String>) -> Self {
        let lang = lang.into();
        if lang == UND {
            return Self::und();
        }
        GoldLabel {
            kind: LabelKind::Single,
            languages: BTreeSet::from([lang]),
        }
    }

    pub fn und() -> Self {
        GoldLabel {
            kind: LabelKind::Und,
            languages: BTreeSet::new(),
        }
    }

    pub fn ambiguous<I, S>(langs: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::set(LabelKind::Ambiguous, langs)
    }

    pub fn multi<I, S>(langs: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::set(LabelKind::Multi, langs)
    }

    fn set<I, S>(kind: LabelKind, langs: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let languages: BTreeSet<String> = langs.into_iter().map(Into::into).collect();
        if languages.len() < 2 {
            return Err(Error::invalid("ambiguous and multi labels need at least two languages"));
        }
        if languages.contains(UND) || languages.contains(AMB) {
            return Err(Error::invalid("`und` and `amb` cannot appear inside a language set"));
        }
        Ok(GoldLabel { kind, languages })
    }

    /// Parses `es`, `und`, `es/ca` (ambiguous) or `es+en` (code-switched).
    pub fn parse(field: &str) -> Result<Self> {
        let field = field.trim();
        if field.is_empty() {
            return Err(Error::invalid("empty label"));
        }
        let valid = |s: &str| !s.is_empty() && !s.chars().any(|c| c.is_whitespace() || "/+,".contains(c));
        if field.contains('/') && field.contains('+') {
            return Err(Error::invalid(format!("label `{field}` mixes `/` and `+`")));
        }
        let (kind, parts): (LabelKind, Vec<&str>) = if field.contains('/') {
            (LabelKind::Ambiguous, field.split('/').collect())
        } else if field.contains('+') {
            (LabelKind::Multi, field.split('+').collect())
        } else if field == UND {
            return Ok(Self::und());
        } else if field == AMB {
            return Err(Error::invalid("`amb` needs its language set, e.g. `es/ca`"));
        } else {
            (LabelKind::Single, vec![field])
        };
        if let Some(bad) = parts.iter().find(|p| !valid(p)) {
            return Err(Error::invalid(format!("bad language code `{bad}` in `{field}`")));
        }
        match kind {
            LabelKind::Single => Ok(Self::single(parts[0])),
            _ => Self::set(kind, parts),
        }
    }

    pub fn kind(&self) -> LabelKind {
        self.kind
    }

    /// Languages named by the label; empty for `und`.
    pub fn languages(&self) -> &BTreeSet<String> {
        &self.languages
    }

    /// Every class label a model must be able to output for this example.
    pub fn classes(&self) -> Vec<String> {
        match self.kind {
            LabelKind::Und => vec![UND.to_string()],
            _ => self.languages.iter().cloned().collect(),
        }
    }

    /// Categories this example counts toward when scoring.
    fn categories(&self) -> BTreeSet<String> {
        match self.kind {
            LabelKind::Single | LabelKind::Multi => self.languages.clone(),
            LabelKind::Ambiguous => BTreeSet::from([AMB.to_string()]),
            LabelKind::Und => BTreeSet::from([UND.to_string()]),
        }
    }

    /// Whether a predicted label set is acceptable for this gold label.
    pub fn accepts(&self, pred: &BTreeSet<String>) -> bool {
        match self.kind {
            LabelKind::Single => pred.len() == 1 && pred.is_superset(&self.languages),
            LabelKind::Ambiguous => !pred.is_disjoint(&self.languages),
            LabelKind::Multi => pred.is_superset(&self.languages),
            LabelKind::Und => pred.len() == 1 && pred.contains(UND),
        }
    }
}

impl fmt::Display for GoldLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let langs: Vec<&str> = self.languages.iter().map(String::as_str).collect();
        match self.kind {
            LabelKind::Und => f.write_str(UND),
            LabelKind::Single => f.write_str(langs[0]),
            LabelKind::Ambiguous => f.write_str(&langs.join("/")),
            LabelKind::Multi => f.write_str(&langs.join("+")),
        }
    }
}

/// Collapses a predicted set that contains `und` to `{und}`.
pub fn normalize_prediction(pred: &BTreeSet<String>) -> BTreeSet<String> {
    if pred.contains(UND) && pred.len() > 1 {
        warn!("prediction {pred:?} mixes `und` with languages; scoring as `und`");
        return BTreeSet::from([UND.to_string()]);
    }
    pred.clone()
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CategoryScore {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl CategoryScore {
    fn finish(&mut self) {
        self.precision = ratio(self.tp, self.tp + self.fp);
        self.recall = ratio(self.tp, self.tp + self.fn_);
        self.f1 = f1(self.precision, self.recall);
    }

    pub fn support(&self) -> u64 {
        self.tp + self.fn_
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Harmonic mean with 0/0 defined as 0.
pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreReport {
    pub categories: BTreeMap<String, CategoryScore>,
    /// Unweighted mean F1 over the categories listed in `macro_categories`.
    pub macro_f1: f64,
    pub macro_categories: Vec<String>,
    /// (gold category, predicted label string) -> count
    pub confusion: BTreeMap<(String, String), u64>,
    pub examples: usize,
    pub correct: usize,
}

impl ScoreReport {
    fn finish(&mut self, macro_over: impl Fn(&str, &CategoryScore) -> bool) {
        for score in self.categories.values_mut() {
            score.finish();
        }
        self.macro_categories = self
            .categories
            .iter()
            .filter(|(k, v)| macro_over(k, v))
            .map(|(k, _)| k.clone())
            .collect();
        self.macro_f1 = if self.macro_categories.is_empty() {
            0.0
        } else {
            self.macro_categories
                .iter()
                .map(|k| self.categories[k].f1)
                .sum::<f64>()
                / self.macro_categories.len() as f64
        };
    }

    pub fn f1(&self, category: &str) -> f64 {
        self.categories.get(category).map_or(0.0, |c| c.f1)
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.correct as u64, self.examples as u64)
    }

    /// Aligned text table.
    pub fn to_table(&self) -> String {
        let width = self.categories.keys().map(String::len).max().unwrap_or(0).max(8);
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<width$} {:>9} {:>9} {:>9} {:>8}",
            "category", "precision", "recall", "f1", "support"
        );
        for (name, c) in &self.categories {
            let _ = writeln!(
                s,
                "{:<width$} {:>9.4} {:>9.4} {:>9.4} {:>8}",
                name,
                c.precision,
                c.recall,
                c.f1,
                c.support()
            );
        }
        let _ = writeln!(s, "{:<width$} {:>9} {:>9} {:>9.4} {:>8}", "macro", "", "", self.macro_f1, self.examples);
        s
    }

    /// One `key=value` line per figure.
    pub fn to_key_values(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "macro_f1={:.6}", self.macro_f1);
        let _ = writeln!(s, "examples={}", self.examples);
        let _ = writeln!(s, "correct={}", self.correct);
        let _ = writeln!(s, "accuracy={:.6}", self.accuracy());
        for (name, c) in &self.categories {
            let _ = writeln!(
                s,
                "category.{name}.precision={:.6}\ncategory.{name}.recall={:.6}\ncategory.{name}.f1={:.6}\ncategory.{name}.tp={}\ncategory.{name}.fp={}\ncategory.{name}.fn={}",
                c.precision, c.recall, c.f1, c.tp, c.fp, c.fn_
            );
        }
        for ((gold, pred), n) in &self.confusion {
            let _ = writeln!(s, "confusion.{gold}.{pred}={n}");
        }
        s
    }
}

fn check_lengths(gold: usize, pred: usize) -> Result<()> {
    if gold != pred {
        return Err(Error::invalid(format!(
            "{gold} gold labels but {pred} predictions"
        )));
    }
    Ok(())
}

fn join_set(set: &BTreeSet<String>) -> String {
    set.iter().map(String::as_str).collect::<Vec<_>>().join("+")
}

/// Shared-task scoring.
///
/// An example is correct when its prediction is acceptable for the gold
/// label ([`GoldLabel::accepts`]). A correct example is a true positive for
/// each of its gold categories; an incorrect one is a false negative for each
/// of them, and every predicted label outside its categories is a false
/// positive. Ambiguous examples count only toward `amb`. The macro average
/// covers categories with at least one gold example.
pub fn score_tweetlid(gold: &[GoldLabel], pred: &[BTreeSet<String>]) -> Result<ScoreReport> {
    check_lengths(gold.len(), pred.len())?;
    let mut report = ScoreReport {
        examples: gold.len(),
        ..Default::default()
    };
    for (g, p) in gold.iter().zip(pred) {
        let p = normalize_prediction(p);
        let cats = g.categories();
        let correct = g.accepts(&p);
        for cat in &cats {
            let entry = report.categories.entry(cat.clone()).or_default();
            if correct {
                entry.tp += 1;
            } else {
                entry.fn_ += 1;
            }
        }
        if correct {
            report.correct += 1;
        }
        // a correct ambiguous example's matched language is credited to `amb`
        if !(correct && g.kind() == LabelKind::Ambiguous) {
            for label in p.iter().filter(|l| !cats.contains(*l)) {
                report.categories.entry(label.clone()).or_default().fp += 1;
            }
        }
        *report
            .confusion
            .entry((g.to_string(), join_set(&p)))
            .or_insert(0) += 1;
    }
    report.finish(|_, c| c.support() > 0);
    Ok(report)
}

/// One-vs-rest scoring for single-label data; the macro average covers
/// categories present in the gold labels.
pub fn score_single_label<S: AsRef<str>>(gold: &[S], pred: &[S]) -> Result<ScoreReport> {
    check_lengths(gold.len(), pred.len())?;
    let mut report = tally_one_vs_rest(gold, pred);
    report.finish(|_, c| c.support() > 0);
    Ok(report)
}

/// Token-level one-vs-rest scoring; the macro average covers every class
/// present in either gold or predicted tags.
pub fn score_words<S: AsRef<str>>(gold: &[S], pred: &[S]) -> Result<ScoreReport> {
    check_lengths(gold.len(), pred.len())?;
    let mut report = tally_one_vs_rest(gold, pred);
    report.finish(|_, _| true);
    Ok(report)
}

fn tally_one_vs_rest<S: AsRef<str>>(gold: &[S], pred: &[S]) -> ScoreReport {
    let mut report = ScoreReport {
        examples: gold.len(),
        ..Default::default()
    };
    for (g, p) in gold.iter().zip(pred) {
        let (g, p) = (g.as_ref(), p.as_ref());
        if g == p {
            report.categories.entry(g.to_string()).or_default().tp += 1;
            report.correct += 1;
        } else {
            report.categories.entry(g.to_string()).or_default().fn_ += 1;
            report.categories.entry(p.to_string()).or_default().fp += 1;
        }
        *report
            .confusion
            .entry((g.to_string(), p.to_string()))
            .or_insert(0) += 1;
    }
    report
}
