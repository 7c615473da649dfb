//! Neural model checkpoints.
//!
//! A text header (names, shapes, labels, vocabulary hash, training metadata)
//! followed by every tensor as little-endian `f64`, in header order:
//!
//! ```text
//! c2v2l-checkpoint v1
//! vocab-hash <sha256>
//! labels <code>\t<code>...
//! config vocab_size=.. char_dim=.. conv1_filters=.. conv2_filters=.. lstm_hidden=.. num_labels=.. peepholes=..
//! meta <key>=<value>
//! tensor <name> <d1>x<d2>...
//! end-header
//! <binary body>
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{self, ModelConfig, ModelParams, Prediction};
use crate::text::CharVocab;
use crate::train::encode_text;

pub const MAGIC: &str = "c2v2l-checkpoint v1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub vocab_hash: String,
    pub labels: Vec<String>,
    pub params: ModelParams,
    /// Free-form training metadata such as seed, steps and head.
    pub metadata: BTreeMap<String, String>,
}

impl Checkpoint {
    pub fn new(vocab: &CharVocab, labels: Vec<String>, params: ModelParams) -> Result<Self> {
        let config = params.config();
        if config.num_labels != labels.len() {
            return Err(Error::CheckpointMismatch(format!(
                "{} labels for a model with {} outputs",
                labels.len(),
                config.num_labels
            )));
        }
        if config.vocab_size != vocab.len() {
            return Err(Error::CheckpointMismatch(format!(
                "model expects {} characters, vocabulary has {}",
                config.vocab_size,
                vocab.len()
            )));
        }
        Ok(Checkpoint {
            vocab_hash: vocab.hash(),
            labels,
            params,
            metadata: BTreeMap::new(),
        })
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.metadata.insert(key.to_string(), value.to_string());
        self
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        let c = self.params.config();
        for l in &self.labels {
            if l.is_empty() || l.contains(char::is_whitespace) {
                return Err(Error::invalid(format!("label `{l}` cannot be stored")));
            }
        }
        let mut header = format!("{MAGIC}\nvocab-hash {}\nlabels {}\n", self.vocab_hash, self.labels.join("\t"));
        header.push_str(&format!(
            "config vocab_size={} char_dim={} conv1_filters={} conv2_filters={} lstm_hidden={} num_labels={} peepholes={}\n",
            c.vocab_size, c.char_dim, c.conv1_filters, c.conv2_filters, c.lstm_hidden, c.num_labels, c.peepholes
        ));
        for (k, v) in &self.metadata {
            if k.contains(['=', '\n', ' ']) || v.contains('\n') {
                return Err(Error::invalid(format!("metadata `{k}` cannot be stored")));
            }
            header.push_str(&format!("meta {k}={v}\n"));
        }
        let tensors = self.params.named_tensors();
        for (name, t) in &tensors {
            let dims: Vec<String> = t.shape().iter().map(usize::to_string).collect();
            header.push_str(&format!("tensor {name} {}\n", dims.join("x")));
        }
        header.push_str("end-header\n");
        out.write_all(header.as_bytes())?;
        let mut body = Vec::with_capacity(8 * self.params.tensors().iter().map(|t| t.len()).sum::<usize>());
        for (_, t) in &tensors {
            for v in t.data() {
                body.extend_from_slice(&v.to_le_bytes());
            }
        }
        out.write_all(&body)?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        self.write(&mut buf)?;
        Ok(buf)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    /// Parses a checkpoint without checking it against a vocabulary.
    pub fn read<R: Read>(input: R) -> Result<Self> {
        let mut reader = BufReader::new(input);
        let mut line_no = 0;
        let mut next_line = |reader: &mut BufReader<R>| -> Result<(usize, String)> {
            let mut line = String::new();
            if reader.read_line(&mut line)? == 0 {
                return Err(Error::format(line_no + 1, "unexpected end of checkpoint header"));
            }
            line_no += 1;
            Ok((line_no, line.trim_end_matches('\n').to_string()))
        };

        let (n, magic) = next_line(&mut reader)?;
        if magic != MAGIC {
            return Err(Error::format(n, format!("not a checkpoint (expected `{MAGIC}`)")));
        }
        let (n, hash_line) = next_line(&mut reader)?;
        let vocab_hash = hash_line
            .strip_prefix("vocab-hash ")
            .ok_or_else(|| Error::format(n, "expected `vocab-hash`"))?
            .to_string();
        let (n, labels_line) = next_line(&mut reader)?;
        let labels: Vec<String> = labels_line
            .strip_prefix("labels ")
            .ok_or_else(|| Error::format(n, "expected `labels`"))?
            .split('\t')
            .map(str::to_string)
            .collect();
        let (n, config_line) = next_line(&mut reader)?;
        let config = parse_config(n, &config_line)?;

        let mut metadata = BTreeMap::new();
        let mut declared = Vec::new();
        loop {
            let (n, line) = next_line(&mut reader)?;
            if line == "end-header" {
                break;
            } else if let Some(kv) = line.strip_prefix("meta ") {
                let (k, v) = kv.split_once('=').ok_or_else(|| Error::format(n, "metadata needs key=value"))?;
                metadata.insert(k.to_string(), v.to_string());
            } else if let Some(rest) = line.strip_prefix("tensor ") {
                let (name, dims) = rest.split_once(' ').ok_or_else(|| Error::format(n, "tensor needs name and shape"))?;
                let shape = dims
                    .split('x')
                    .map(|d| d.parse::<usize>().map_err(|_| Error::format(n, format!("bad dimension `{d}`"))))
                    .collect::<Result<Vec<_>>>()?;
                declared.push((n, name.to_string(), shape));
            } else {
                return Err(Error::format(n, format!("unexpected header line `{line}`")));
            }
        }

        let mut params = ModelParams::zeros(config).map_err(|e| Error::CheckpointMismatch(e.to_string()))?;
        if labels.len() != config.num_labels {
            return Err(Error::CheckpointMismatch(format!(
                "{} labels for {} outputs",
                labels.len(),
                config.num_labels
            )));
        }
        let mut body = Vec::new();
        reader.read_to_end(&mut body)?;
        let mut expected = params.named_tensors_mut();
        if declared.len() != expected.len() {
            return Err(Error::CheckpointMismatch(format!(
                "{} tensors declared, model has {}",
                declared.len(),
                expected.len()
            )));
        }
        let total: usize = expected.iter().map(|(_, t)| t.len()).sum();
        if body.len() != 8 * total {
            return Err(Error::CheckpointMismatch(format!(
                "body holds {} bytes, shapes need {}",
                body.len(),
                8 * total
            )));
        }
        let mut pos = 0;
        for ((n, name, shape), (want_name, tensor)) in declared.iter().zip(expected.iter_mut()) {
            if name != want_name || shape.as_slice() != tensor.shape() {
                return Err(Error::CheckpointMismatch(format!(
                    "line {n}: tensor {name} {shape:?} where {want_name} {:?} was expected",
                    tensor.shape()
                )));
            }
            for v in tensor.data_mut() {
                *v = f64::from_le_bytes(body[pos..pos + 8].try_into().expect("8 bytes"));
                pos += 8;
            }
        }
        drop(expected);
        if !params.is_finite() {
            return Err(Error::CheckpointMismatch("checkpoint holds non-finite values".into()));
        }
        Ok(Checkpoint {
            vocab_hash,
            labels,
            params,
            metadata,
        })
    }

    /// Reads a checkpoint and refuses it unless it was trained with `vocab`.
    pub fn load(path: impl AsRef<Path>, vocab: &CharVocab) -> Result<Self> {
        let ckpt = Self::read(fs::File::open(path)?)?;
        ckpt.verify_vocab(vocab)?;
        Ok(ckpt)
    }

    pub fn verify_vocab(&self, vocab: &CharVocab) -> Result<()> {
        let hash = vocab.hash();
        if hash != self.vocab_hash {
            return Err(Error::CheckpointMismatch(format!(
                "vocabulary hash {hash} differs from the checkpoint's {}",
                self.vocab_hash
            )));
        }
        if vocab.len() != self.params.config().vocab_size {
            return Err(Error::CheckpointMismatch("vocabulary size differs from the model's".into()));
        }
        Ok(())
    }
}

fn parse_config(line_no: usize, line: &str) -> Result<ModelConfig> {
    let rest = line
        .strip_prefix("config ")
        .ok_or_else(|| Error::format(line_no, "expected `config`"))?;
    let fields: BTreeMap<&str, &str> = rest.split(' ').filter_map(|kv| kv.split_once('=')).collect();
    let get = |k: &str| -> Result<usize> {
        fields
            .get(k)
            .ok_or_else(|| Error::format(line_no, format!("config is missing `{k}`")))?
            .parse()
            .map_err(|_| Error::format(line_no, format!("config `{k}` is not a number")))
    };
    let peepholes = match fields.get("peepholes") {
        Some(&"true") => true,
        Some(&"false") => false,
        _ => return Err(Error::format(line_no, "config `peepholes` must be true or false")),
    };
    Ok(ModelConfig {
        vocab_size: get("vocab_size")?,
        char_dim: get("char_dim")?,
        conv1_filters: get("conv1_filters")?,
        conv2_filters: get("conv2_filters")?,
        lstm_hidden: get("lstm_hidden")?,
        num_labels: get("num_labels")?,
        peepholes,
    })
}

/// A checkpoint paired with the vocabulary it was trained on.
#[derive(Debug, Clone)]
pub struct NeuralModel {
    pub vocab: CharVocab,
    pub checkpoint: Checkpoint,
}

impl NeuralModel {
    pub fn new(vocab: CharVocab, checkpoint: Checkpoint) -> Result<Self> {
        checkpoint.verify_vocab(&vocab)?;
        Ok(NeuralModel { vocab, checkpoint })
    }

    pub fn load(vocab_path: impl AsRef<Path>, checkpoint_path: impl AsRef<Path>) -> Result<Self> {
        let vocab = CharVocab::read(BufReader::new(fs::File::open(vocab_path)?))?;
        let checkpoint = Checkpoint::load(checkpoint_path, &vocab)?;
        Ok(NeuralModel { vocab, checkpoint })
    }

    pub fn labels(&self) -> &[String] {
        &self.checkpoint.labels
    }

    pub fn params(&self) -> &ModelParams {
        &self.checkpoint.params
    }

    /// Normalizes and scores a raw tweet.
    pub fn predict_text(&self, text: &str) -> Result<Prediction> {
        model::predict_sentence(&encode_text(&self.vocab, text)?, self.params())
    }

    /// Scores pre-tokenized words without normalization.
    pub fn predict_tokens(&self, tokens: &[String]) -> Result<Prediction> {
        let words: Vec<Vec<u32>> = tokens.iter().map(|t| self.vocab.encode(t)).collect();
        model::predict_sentence(&words, self.params())
    }

    /// Eval-mode char2vec vector of any string.
    pub fn word_vector(&self, word: &str) -> Result<Vec<f64>> {
        model::word_vector(&self.vocab.encode(word), self.params())
    }
}
