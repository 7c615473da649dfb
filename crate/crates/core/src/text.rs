//! Normalization, tokenization and character vocabulary.
//!
//! The same normalization runs in front of both classifiers: repeated
//! patterns are capped, URLs/usernames/hashtags are split off the preceding
//! word, and long whitespace-free runs are broken every 40 bytes. Casing and
//! punctuation are left untouched.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Maximum number of consecutive copies of a repeating pattern.
pub const MAX_REPEATS: usize = 5;
/// Longest repeating pattern, in codepoints, subject to capping.
pub const MAX_PATTERN_LEN: usize = 4;
/// Longest whitespace-free run, in UTF-8 bytes, before a break is forced.
pub const MAX_RUN_BYTES: usize = 40;

const ENTITY_PREFIXES: [&str; 4] = ["http://", "https://", "@", "#"];

/// Caps every run of a 1-4 codepoint pattern at five consecutive copies.
///
/// Passes run over pattern lengths 1, 2, 3, 4 in that order, each scanning
/// left to right; the round repeats until nothing changes.
pub fn cap_repetitions(text: &str) -> String {
    let mut chars: Vec<char> = text.chars().collect();
    loop {
        let mut changed = false;
        for period in 1..=MAX_PATTERN_LEN {
            changed |= cap_pass(&mut chars, period);
        }
        if !changed {
            break;
        }
    }
    chars.into_iter().collect()
}

fn cap_pass(chars: &mut Vec<char>, period: usize) -> bool {
    let mut changed = false;
    let mut start = 0;
    while start + period <= chars.len() {
        let copies = count_copies(chars, start, period);
        if copies > MAX_REPEATS {
            chars.drain(start + MAX_REPEATS * period..start + copies * period);
            changed = true;
        }
        start += 1;
    }
    changed
}

fn count_copies(chars: &[char], start: usize, period: usize) -> usize {
    let pattern = &chars[start..start + period];
    let mut copies = 1;
    let mut next = start + period;
    while next + period <= chars.len() && &chars[next..next + period] == pattern {
        copies += 1;
        next += period;
    }
    copies
}

/// Inserts a single space before every URL, username or hashtag marker that
/// directly follows a non-whitespace character.
pub fn split_entities(text: &str) -> String {
    let mut out = String::with_capacity(text.len() + 8);
    let mut prev: Option<char> = None;
    for (pos, ch) in text.char_indices() {
        if let Some(p) = prev {
            if !p.is_whitespace() && ENTITY_PREFIXES.iter().any(|m| text[pos..].starts_with(m)) {
                out.push(' ');
            }
        }
        out.push(ch);
        prev = Some(ch);
    }
    out
}

/// Breaks whitespace-free runs longer than 40 UTF-8 bytes, always at a
/// codepoint boundary.
pub fn force_breaks(text: &str) -> String {
    let mut out = String::with_capacity(text.len() + 8);
    let mut run_bytes = 0;
    for ch in text.chars() {
        if ch.is_whitespace() {
            run_bytes = 0;
        } else {
            let width = ch.len_utf8();
            if run_bytes + width > MAX_RUN_BYTES {
                out.push(' ');
                run_bytes = 0;
            }
            run_bytes += width;
        }
        out.push(ch);
    }
    out
}

/// A normalized, whitespace-tokenized text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormalizedText {
    tokens: Vec<String>,
    original: String,
}

impl NormalizedText {
    /// Builds a text from already-normalized tokens. Used for scoring inputs
    /// that were normalized elsewhere, including the empty token list.
    pub fn from_tokens(tokens: Vec<String>) -> Self {
        let original = tokens.join(" ");
        NormalizedText { tokens, original }
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn original(&self) -> &str {
        &self.original
    }

    /// Tokens joined by single spaces.
    pub fn joined(&self) -> String {
        self.tokens.join(" ")
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Full preprocessing: cap repetitions, split entities, force breaks, then
/// split on Unicode whitespace, repeated on the joined tokens until stable.
///
/// Returns [`Error::EmptyText`] when nothing but whitespace remains; callers
/// decide whether that means `und`.
pub fn normalize(text: &str) -> Result<NormalizedText> {
    let tokens = normalize_tokens(text);
    if tokens.is_empty() {
        return Err(Error::EmptyText);
    }
    Ok(NormalizedText {
        tokens,
        original: text.to_string(),
    })
}

/// Like [`normalize`] but returns an empty token list instead of an error.
pub fn normalize_lossy(text: &str) -> NormalizedText {
    NormalizedText {
        tokens: normalize_tokens(text),
        original: text.to_string(),
    }
}

// Joining tokens with single spaces can line up a new run of a pattern like
// "# " that the original whitespace hid, so the pipeline is rerun on the
// joined tokens until they are stable. Each extra round removes characters.
fn normalize_tokens(text: &str) -> Vec<String> {
    let mut tokens = pipeline(text);
    loop {
        let again = pipeline(&tokens.join(" "));
        if again == tokens {
            return tokens;
        }
        tokens = again;
    }
}

fn pipeline(text: &str) -> Vec<String> {
    let capped = cap_repetitions(text);
    let split = split_entities(&capped);
    let broken = force_breaks(&split);
    broken.split_whitespace().map(str::to_string).collect()
}

/// Index of the unknown-character symbol.
pub const UNK: u32 = 0;
/// Index of the padding symbol.
pub const PAD: u32 = 1;
const RESERVED: usize = 2;
/// Minimum corpus frequency for a codepoint to receive its own index.
pub const MIN_CHAR_COUNT: u64 = 2;

const VOCAB_MAGIC: &str = "c2v2l-vocab";
const VOCAB_VERSION: u32 = 1;

/// Smallest `d` with `2^d >= size`, i.e. `ceil(log2 size)`.
pub fn embedding_dim_for(size: usize) -> usize {
    let mut d = 0;
    while (1usize << d) < size {
        d += 1;
    }
    d
}

/// Codepoint to dense index map, with `UNK` at 0 and `PAD` at 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CharVocab {
    // (codepoint, training count) in index order, reserved symbols excluded
    entries: Vec<(char, u64)>,
    index: HashMap<char, u32>,
}

impl CharVocab {
    fn from_entries(entries: Vec<(char, u64)>) -> Self {
        let index = entries
            .iter()
            .enumerate()
            .map(|(i, &(ch, _))| (ch, (i + RESERVED) as u32))
            .collect();
        CharVocab { entries, index }
    }

    /// Number of indexed symbols, reserved ones included.
    pub fn len(&self) -> usize {
        self.entries.len() + RESERVED
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Character embedding size.
    pub fn dim(&self) -> usize {
        embedding_dim_for(self.len())
    }

    pub fn get(&self, ch: char) -> u32 {
        self.index.get(&ch).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, ch: char) -> bool {
        self.index.contains_key(&ch)
    }

    pub fn encode(&self, word: &str) -> Vec<u32> {
        word.chars().map(|c| self.get(c)).collect()
    }

    /// Indexed codepoints with their training counts, in index order.
    pub fn entries(&self) -> &[(char, u64)] {
        &self.entries
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(self.to_text().as_bytes())?;
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{VOCAB_MAGIC} v{VOCAB_VERSION}\t{}\t{}", self.len(), self.dim());
        let _ = writeln!(s, "<unk>\t{UNK}\t0");
        let _ = writeln!(s, "<pad>\t{PAD}\t0");
        for (i, &(ch, count)) in self.entries.iter().enumerate() {
            let _ = writeln!(s, "{:x}\t{}\t{}", ch as u32, i + RESERVED, count);
        }
        s
    }

    pub fn read<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::format(1, "missing vocab header"))??;
        let fields: Vec<&str> = header.split('\t').collect();
        if fields.len() != 3 || fields[0] != format!("{VOCAB_MAGIC} v{VOCAB_VERSION}") {
            return Err(Error::format(1, format!("bad vocab header `{header}`")));
        }
        let size: usize = parse_field(fields[1], 1)?;
        let dim: usize = parse_field(fields[2], 1)?;
        let mut entries = Vec::new();
        for (n, line) in lines.enumerate() {
            let lineno = n + 2;
            let line = line?;
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 {
                return Err(Error::format(lineno, "expected 3 tab-separated fields"));
            }
            let index: usize = parse_field(cols[1], lineno)?;
            match cols[0] {
                "<unk>" if index == UNK as usize => continue,
                "<pad>" if index == PAD as usize => continue,
                hex => {
                    let cp = u32::from_str_radix(hex, 16)
                        .ok()
                        .and_then(char::from_u32)
                        .ok_or_else(|| Error::format(lineno, format!("bad codepoint `{hex}`")))?;
                    if index != entries.len() + RESERVED {
                        return Err(Error::format(lineno, "vocab indices are not dense"));
                    }
                    entries.push((cp, parse_field(cols[2], lineno)?));
                }
            }
        }
        let vocab = CharVocab::from_entries(entries);
        if vocab.len() != size || vocab.dim() != dim {
            return Err(Error::format(1, "vocab header disagrees with its entries"));
        }
        Ok(vocab)
    }

    /// Hex SHA-256 of the serialized vocabulary.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest.iter().fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }
}

fn parse_field<T: std::str::FromStr>(s: &str, line: usize) -> Result<T> {
    s.parse()
        .map_err(|_| Error::format(line, format!("cannot parse `{s}`")))
}

/// Builds the character vocabulary from a training corpus.
///
/// Every codepoint seen at least twice gets an index; indices are assigned by
/// descending count, ties by codepoint.
pub fn build_vocab<'a, I>(corpus: I) -> Result<CharVocab>
where
    I: IntoIterator<Item = &'a NormalizedText>,
{
    let mut counts: HashMap<char, u64> = HashMap::new();
    let mut seen_any = false;
    for text in corpus {
        seen_any = true;
        for token in text.tokens() {
            for ch in token.chars() {
                *counts.entry(ch).or_insert(0) += 1;
            }
        }
    }
    if !seen_any {
        return Err(Error::EmptyCorpus("vocabulary"));
    }
    let mut entries: Vec<(char, u64)> = counts
        .into_iter()
        .filter(|&(_, n)| n >= MIN_CHAR_COUNT)
        .collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(CharVocab::from_entries(entries))
}
