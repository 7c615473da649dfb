//! Synthetic corpora shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};

use c2v2l::data::{TaggedTweet, TextRecord};
use c2v2l::eval::GoldLabel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A toy language: words are random strings over its own alphabet.
pub struct ToyLanguage {
    pub code: &'static str,
    pub alphabet: Vec<char>,
}

impl ToyLanguage {
    pub fn new(code: &'static str, alphabet: &str) -> Self {
        ToyLanguage {
            code,
            alphabet: alphabet.chars().collect(),
        }
    }

    pub fn word(&self, rng: &mut ChaCha8Rng) -> String {
        let len = rng.gen_range(2..=7);
        (0..len).map(|_| self.alphabet[rng.gen_range(0..self.alphabet.len())]).collect()
    }

    pub fn sentence(&self, rng: &mut ChaCha8Rng) -> Vec<String> {
        let n = rng.gen_range(3..=8);
        (0..n).map(|_| self.word(rng)).collect()
    }
}

pub fn disjoint_pair() -> [ToyLanguage; 2] {
    [ToyLanguage::new("aa", "abcdefgh"), ToyLanguage::new("bb", "mnopqrst")]
}

/// `per_language` tweets per language, ids `<prefix><n>`, interleaved.
pub fn tweets(langs: &[ToyLanguage], per_language: usize, prefix: &str, seed: u64) -> Vec<TextRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for i in 0..per_language {
        for lang in langs {
            out.push(TextRecord {
                id: format!("{prefix}{}", out.len()),
                label: GoldLabel::single(lang.code),
                text: lang.sentence(&mut rng).join(" "),
            });
            let _ = i;
        }
    }
    out
}

/// Word-by-word code-switched tweets tagged with each word's language.
pub fn code_switched(langs: &[ToyLanguage], count: usize, seed: u64) -> Vec<TaggedTweet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let n = rng.gen_range(3..=8);
            let mut tokens = Vec::new();
            let mut tags = Vec::new();
            for _ in 0..n {
                let lang = &langs[rng.gen_range(0..langs.len())];
                tokens.push(lang.word(&mut rng));
                tags.push(lang.code.to_string());
            }
            TaggedTweet { tokens, tags }
        })
        .collect()
}

/// Witten-Bell written from the recurrence alone, over strings.
pub struct WittenBellOracle {
    n: usize,
    chars: BTreeSet<char>,
    // context string -> (next -> count)
    table: HashMap<String, HashMap<String, u64>>,
}

impl WittenBellOracle {
    pub const BOS: &'static str = "\u{2}";
    pub const EOS: &'static str = "\u{3}";
    pub const UNK: &'static str = "\u{1}";

    pub fn events(&self, line: &str) -> Vec<String> {
        let mut ev: Vec<String> = line
            .chars()
            .map(|c| if self.chars.contains(&c) { c.to_string() } else { Self::UNK.to_string() })
            .collect();
        ev.push(Self::EOS.into());
        ev
    }

    pub fn train(lines: &[String], n: usize) -> Self {
        let chars = lines.iter().flat_map(|l| l.chars()).collect();
        let mut bf = WittenBellOracle { n, chars, table: HashMap::new() };
        for line in lines {
            let ev = bf.events(line);
            let mut hist = vec![Self::BOS.to_string()];
            for e in ev {
                for k in 0..n {
                    if k > hist.len() {
                        break;
                    }
                    let ctx = hist[hist.len() - k..].concat();
                    *bf.table.entry(ctx).or_default().entry(e.clone()).or_default() += 1;
                }
                hist.push(e);
            }
        }
        bf
    }

    pub fn p(&self, hist: &[String], e: &str) -> f64 {
        let uni = &self.table[""];
        let vocab = self.chars.len() + 2;
        let mut p = if uni.contains_key(e) { 0.0 } else { 1.0 / (vocab - uni.len()) as f64 };
        for k in 0..self.n {
            if k > hist.len() {
                break;
            }
            let Some(next) = self.table.get(&hist[hist.len() - k..].concat()) else {
                break;
            };
            let total: u64 = next.values().sum();
            let types = next.len() as f64;
            p = (*next.get(e).unwrap_or(&0) as f64 + types * p) / (total as f64 + types);
        }
        p
    }

    pub fn perplexity(&self, lines: &[String]) -> f64 {
        let (mut lp, mut count) = (0.0, 0usize);
        for line in lines {
            let mut hist = vec![Self::BOS.to_string()];
            for e in self.events(line) {
                lp += self.p(&hist, &e).ln();
                count += 1;
                hist.push(e);
            }
        }
        (-lp / count as f64).exp()
    }

    /// Log probability of one line, in nats.
    pub fn log_prob(&self, line: &str) -> f64 {
        let mut hist = vec![Self::BOS.to_string()];
        let mut lp = 0.0;
        for e in self.events(line) {
            lp += self.p(&hist, &e).ln();
            hist.push(e);
        }
        lp
    }
}
