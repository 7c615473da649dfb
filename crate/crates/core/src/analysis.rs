//! Embedding analysis: nearest words under char2vec and label embeddings.

use std::cmp::Ordering;
use std::io::{BufRead, Write};

use rayon::prelude::*;

use crate::checkpoint::NeuralModel;
use crate::error::{Error, Result};

pub const DEFAULT_NEIGHBORS: usize = 7;

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na * nb)
}

/// The `k` candidates most similar to `query`, most similar first (ties by
/// candidate order). The query itself is never returned.
pub fn neighbors(model: &NeuralModel, query: &str, candidates: &[String], k: usize) -> Result<Vec<(String, f64)>> {
    if query.is_empty() {
        return Err(Error::invalid("empty query word"));
    }
    let q = model.word_vector(query)?;
    let mut scored = candidates
        .par_iter()
        .filter(|c| c.as_str() != query && !c.is_empty())
        .map(|c| Ok((c.clone(), cosine(&q, &model.word_vector(c)?))))
        .collect::<Result<Vec<_>>>()?;
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal));
    scored.truncate(k);
    Ok(scored)
}

/// Label embedding rows keyed by label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelEmbeddings {
    pub labels: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl LabelEmbeddings {
    pub fn from_model(model: &NeuralModel) -> Self {
        LabelEmbeddings {
            labels: model.labels().to_vec(),
            rows: model.params().label_embeddings(),
        }
    }

    pub fn similarity_matrix(&self) -> Vec<Vec<f64>> {
        self.rows
            .iter()
            .map(|a| self.rows.iter().map(|b| cosine(a, b)).collect())
            .collect()
    }

    /// Tab-separated rows `label v1 v2 ...` in shortest round-trip form, a
    /// blank line, then the cosine-similarity matrix with a header row.
    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        for (l, row) in self.labels.iter().zip(&self.rows) {
            let vals: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            writeln!(out, "{l}\t{}", vals.join("\t"))?;
        }
        writeln!(out)?;
        writeln!(out, "cosine\t{}", self.labels.join("\t"))?;
        for (l, row) in self.labels.iter().zip(self.similarity_matrix()) {
            let vals: Vec<String> = row.iter().map(|v| format!("{v:.6}")).collect();
            writeln!(out, "{l}\t{}", vals.join("\t"))?;
        }
        Ok(())
    }

    /// Reads the embedding block written by [`Self::write`].
    pub fn read<R: BufRead>(input: R) -> Result<Self> {
        let mut labels = Vec::new();
        let mut rows = Vec::new();
        for (n, line) in input.lines().enumerate() {
            let line = line?;
            if line.is_empty() {
                break;
            }
            let mut fields = line.split('\t');
            let label = fields.next().unwrap_or_default().to_string();
            let row = fields
                .map(|f| f.parse::<f64>().map_err(|_| Error::format(n + 1, format!("bad value `{f}`"))))
                .collect::<Result<Vec<_>>>()?;
            if rows.first().is_some_and(|r: &Vec<f64>| r.len() != row.len()) {
                return Err(Error::format(n + 1, "rows differ in length"));
            }
            labels.push(label);
            rows.push(row);
        }
        Ok(LabelEmbeddings { labels, rows })
    }
}
