//! Corpus files.
//!
//! Tweet files are TSV, one record per line: `id \t label \t text`. Labels
//! are a language code, `und`, an ambiguous set `es/ca` or a code-switched
//! set `es+en`. Token files hold one `token \t tag` pair per line, with a
//! blank line closing each tweet.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use log::warn;

use crate::error::{Error, Result};
use crate::eval::GoldLabel;

/// One labeled tweet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TextRecord {
    pub id: String,
    pub label: GoldLabel,
    pub text: String,
}

/// One word-tagged tweet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaggedTweet {
    pub tokens: Vec<String>,
    pub tags: Vec<String>,
}

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    /// Skip malformed lines with a warning instead of failing.
    pub lenient: bool,
    /// When set, every language code must belong to this inventory.
    pub inventory: Option<BTreeSet<String>>,
}

#[derive(Debug, Clone)]
pub struct Loaded<T> {
    pub records: Vec<T>,
    /// (line number, message) for every malformed line.
    pub malformed: Vec<(usize, String)>,
}

impl<T> Default for Loaded<T> {
    fn default() -> Self {
        Loaded {
            records: Vec::new(),
            malformed: Vec::new(),
        }
    }
}

impl<T> Loaded<T> {
    fn finish(self, lenient: bool) -> Result<Self> {
        if self.malformed.is_empty() {
            return Ok(self);
        }
        if lenient {
            for (line, msg) in &self.malformed {
                warn!("skipping line {line}: {msg}");
            }
            return Ok(self);
        }
        let (first_line, first_message) = self.malformed[0].clone();
        Err(Error::Malformed {
            count: self.malformed.len(),
            first_line,
            first_message,
        })
    }
}

fn check_inventory(label: &GoldLabel, inventory: &Option<BTreeSet<String>>) -> Result<()> {
    if let Some(inv) = inventory {
        if let Some(bad) = label.classes().into_iter().find(|l| !inv.contains(l)) {
            return Err(Error::invalid(format!("language `{bad}` is not in the inventory")));
        }
    }
    Ok(())
}

pub fn parse_tweet_line(line: &str) -> Result<TextRecord> {
    let mut fields = line.splitn(3, '\t');
    let (id, label, text) = match (fields.next(), fields.next(), fields.next()) {
        (Some(id), Some(label), Some(text)) => (id, label, text),
        _ => return Err(Error::invalid("expected `id \\t label \\t text`")),
    };
    if id.is_empty() {
        return Err(Error::invalid("empty id"));
    }
    if text.contains('\t') {
        return Err(Error::invalid("text contains a tab"));
    }
    Ok(TextRecord {
        id: id.to_string(),
        label: GoldLabel::parse(label)?,
        text: text.to_string(),
    })
}

pub fn read_tweets<R: BufRead>(input: R, opts: &LoadOptions) -> Result<Loaded<TextRecord>> {
    let mut loaded = Loaded::default();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.is_empty() {
            continue;
        }
        match parse_tweet_line(line).and_then(|r| check_inventory(&r.label, &opts.inventory).map(|_| r)) {
            Ok(record) => loaded.records.push(record),
            Err(e) => loaded.malformed.push((n + 1, e.to_string())),
        }
    }
    loaded.finish(opts.lenient)
}

pub fn load_tweets(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<Loaded<TextRecord>> {
    read_tweets(BufReader::new(File::open(path)?), opts)
}

pub fn write_tweets<W: Write>(mut out: W, records: &[TextRecord]) -> Result<()> {
    for r in records {
        writeln!(out, "{}\t{}\t{}", r.id, r.label, r.text)?;
    }
    Ok(())
}

pub fn read_tagged<R: BufRead>(input: R, opts: &LoadOptions) -> Result<Loaded<TaggedTweet>> {
    let mut loaded = Loaded::default();
    let mut current = TaggedTweet {
        tokens: Vec::new(),
        tags: Vec::new(),
    };
    let flush = |current: &mut TaggedTweet, loaded: &mut Loaded<TaggedTweet>| {
        if !current.tokens.is_empty() {
            loaded.records.push(std::mem::replace(
                current,
                TaggedTweet {
                    tokens: Vec::new(),
                    tags: Vec::new(),
                },
            ));
        }
    };
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.trim().is_empty() {
            flush(&mut current, &mut loaded);
            continue;
        }
        let parsed = match line.split_once('\t') {
            Some(("", _)) => Err("empty token".to_string()),
            Some((_, tag)) if tag.is_empty() || tag.contains('\t') => Err("bad tag".to_string()),
            Some((tok, tag)) => match &opts.inventory {
                Some(inv) if !inv.contains(tag) => Err(format!("tag `{tag}` is not in the inventory")),
                _ => Ok((tok, tag)),
            },
            None => Err("expected `token \\t tag`".to_string()),
        };
        match parsed {
            Ok((tok, tag)) => {
                current.tokens.push(tok.to_string());
                current.tags.push(tag.to_string());
            }
            Err(msg) => loaded.malformed.push((n + 1, msg)),
        }
    }
    flush(&mut current, &mut loaded);
    loaded.finish(opts.lenient)
}

pub fn load_tagged(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<Loaded<TaggedTweet>> {
    read_tagged(BufReader::new(File::open(path)?), opts)
}

pub fn write_tagged<W: Write>(mut out: W, tweets: &[TaggedTweet]) -> Result<()> {
    for t in tweets {
        for (tok, tag) in t.tokens.iter().zip(&t.tags) {
            writeln!(out, "{tok}\t{tag}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<TextRecord>,
    pub dev: Vec<TextRecord>,
    pub test: Vec<TextRecord>,
}

/// Ids ending in `0` go to test, ids ending in `1` to dev, the rest to train.
pub fn split_by_id_digit(records: Vec<TextRecord>) -> Split {
    let mut split = Split::default();
    for r in records {
        match r.id.chars().last() {
            Some('0') => split.test.push(r),
            Some('1') => split.dev.push(r),
            _ => split.train.push(r),
        }
    }
    split
}

/// Default fragment length, in codepoints.
pub const FRAGMENT_LEN: usize = 140;
/// Default number of fragments kept per language.
pub const FRAGMENTS_PER_LANGUAGE: usize = 25_000;

fn is_sentence_end(ch: char) -> bool {
    matches!(ch, '.' | '!' | '?' | '。')
}

/// Cuts running text into tweet-sized fragments.
///
/// Sentences end after `.`, `!`, `?` or `。` followed by whitespace.
/// Consecutive sentences are packed into fragments of at most `max_len`
/// codepoints; a longer sentence is hard-split, at the last whitespace inside
/// the window when there is one. At most `cap` fragments are returned.
pub fn fragment_corpus(text: &str, max_len: usize, cap: usize) -> Vec<String> {
    assert!(max_len > 0, "fragment length must be positive");
    let mut fragments = Vec::new();
    let chars: Vec<char> = text.chars().map(|c| if c.is_whitespace() { ' ' } else { c }).collect();
    let mut sentences: Vec<&[char]> = Vec::new();
    let mut start = 0;
    for i in 0..chars.len() {
        let ends = is_sentence_end(chars[i]) && chars.get(i + 1).is_some_and(|c| *c == ' ');
        if ends {
            sentences.push(&chars[start..=i]);
            start = i + 1;
        }
    }
    sentences.push(&chars[start..]);

    // consecutive sentences are packed greedily; the tail of a hard-split
    // sentence can still take the sentences after it
    let mut current: Vec<char> = Vec::new();
    for sentence in sentences {
        let mut rest = trim(sentence);
        if rest.is_empty() {
            continue;
        }
        if !current.is_empty() && current.len() + 1 + rest.len() <= max_len {
            current.push(' ');
            current.extend_from_slice(rest);
            continue;
        }
        if !current.is_empty() {
            fragments.push(current.drain(..).collect());
        }
        while rest.len() > max_len {
            let window = &rest[..=max_len];
            let cut = window.iter().rposition(|c| *c == ' ').filter(|&p| p > 0).unwrap_or(max_len);
            fragments.push(trim(&rest[..cut]).iter().collect());
            rest = trim(&rest[cut..]);
        }
        current.extend_from_slice(rest);
    }
    if !current.is_empty() {
        fragments.push(current.into_iter().collect());
    }
    fragments.truncate(cap);
    fragments
}

fn trim(s: &[char]) -> &[char] {
    let start = s.iter().position(|c| *c != ' ').unwrap_or(s.len());
    let end = s.iter().rposition(|c| *c != ' ').map_or(start, |p| p + 1);
    &s[start..end]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::LabelKind;

    fn strict() -> LoadOptions {
        LoadOptions::default()
    }

    #[test]
    fn parses_label_kinds() {
        let input = "1\tes\thola\n2\tes/ca\tbon dia\n3\tes+en\thola friend\n4\tund\t:)\n";
        let loaded = read_tweets(input.as_bytes(), &strict()).unwrap();
        let kinds: Vec<LabelKind> = loaded.records.iter().map(|r| r.label.kind()).collect();
        assert_eq!(kinds, [LabelKind::Single, LabelKind::Ambiguous, LabelKind::Multi, LabelKind::Und]);
        assert_eq!(loaded.records[1].text, "bon dia");
    }

    #[test]
    fn malformed_lines_fail_unless_lenient() {
        let input = "1\tes\thola\nbroken line\n3\tes\tx\ty\n";
        match read_tweets(input.as_bytes(), &strict()) {
            Err(Error::Malformed { count, first_line, .. }) => {
                assert_eq!(count, 2);
                assert_eq!(first_line, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
        let lenient = LoadOptions {
            lenient: true,
            ..Default::default()
        };
        let loaded = read_tweets(input.as_bytes(), &lenient).unwrap();
        assert_eq!(loaded.records.len(), 1);
        assert_eq!(loaded.malformed.len(), 2);
    }

    #[test]
    fn inventory_is_enforced() {
        let opts = LoadOptions {
            lenient: false,
            inventory: Some(["es", "en", "und"].iter().map(|s| s.to_string()).collect()),
        };
        assert!(read_tweets("1\tes+en\thi\n2\tund\t?\n".as_bytes(), &opts).is_ok());
        assert!(read_tweets("1\tfr\tsalut\n".as_bytes(), &opts).is_err());
    }

    #[test]
    fn split_by_last_digit() {
        let recs: Vec<TextRecord> = ["12340", "12341", "12347", "9"]
            .iter()
            .map(|id| TextRecord {
                id: id.to_string(),
                label: GoldLabel::single("es"),
                text: "x".into(),
            })
            .collect();
        let split = split_by_id_digit(recs);
        assert_eq!(split.test[0].id, "12340");
        assert_eq!(split.dev[0].id, "12341");
        assert_eq!(split.train.len(), 2);
    }

    #[test]
    fn tagged_file() {
        let input = "hola\tes\nfriend\ten\n\n\nok\ten\n";
        let loaded = read_tagged(input.as_bytes(), &strict()).unwrap();
        assert_eq!(loaded.records.len(), 2);
        assert_eq!(loaded.records[0].tags, ["es", "en"]);
        let mut buf = Vec::new();
        write_tagged(&mut buf, &loaded.records).unwrap();
        let again = read_tagged(buf.as_slice(), &strict()).unwrap();
        assert_eq!(again.records, loaded.records);
        assert!(read_tagged("\tes\n".as_bytes(), &strict()).is_err());
    }

    #[test]
    fn fragments_long_paragraph() {
        let sentence = "Esta es una frase bastante normal que sirve de ejemplo. ";
        let paragraph = sentence.repeat(6);
        assert!(paragraph.chars().count() >= 300);
        let frags = fragment_corpus(&paragraph, FRAGMENT_LEN, FRAGMENTS_PER_LANGUAGE);
        assert!(frags.len() >= 2);
        assert!(frags.iter().all(|f| f.chars().count() <= FRAGMENT_LEN && !f.is_empty()));
    }

    #[test]
    fn fragments_hard_split_without_boundaries() {
        let text = "x".repeat(300);
        let frags = fragment_corpus(&text, FRAGMENT_LEN, 100);
        assert_eq!(frags.len(), 3);
        assert!(frags.iter().all(|f| f.chars().count() <= FRAGMENT_LEN));
        assert_eq!(frags.concat(), text);
    }

    #[test]
    fn fragments_short_and_capped() {
        assert_eq!(fragment_corpus("Hola mundo.", FRAGMENT_LEN, 10), vec!["Hola mundo."]);
        assert_eq!(fragment_corpus("Uno. Dos. Tres.", FRAGMENT_LEN, 10), vec!["Uno. Dos. Tres."]);
        assert_eq!(fragment_corpus("Uno. Dos. Tres.", 10, 10), vec!["Uno. Dos.", "Tres."]);
        assert_eq!(fragment_corpus("Uno. Dos. Tres.", 4, 1), vec!["Uno."]);
        assert!(fragment_corpus("   ", FRAGMENT_LEN, 10).is_empty());
    }
}
