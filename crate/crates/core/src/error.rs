use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    #[error("line {line}: {message}")]
    Format { line: usize, message: String },

    #[error("{count} malformed line(s); first at line {first_line}: {first_message}")]
    Malformed {
        count: usize,
        first_line: usize,
        first_message: String,
    },

    #[error("text is empty after normalization")]
    EmptyText,

    #[error("empty corpus: {0}")]
    EmptyCorpus(&'static str),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite loss at step {step} (batch ids: {batch_ids:?})")]
    NonFiniteLoss { step: u64, batch_ids: Vec<String> },

    #[error("checkpoint mismatch: {0}")]
    CheckpointMismatch(String),

    #[error("example `{0}` appears in both training and held-out data")]
    Leakage(String),
}

impl Error {
    pub fn format(line: usize, message: impl Into<String>) -> Self {
        Error::Format {
            line,
            message: message.into(),
        }
    }

    pub fn shape(message: impl Into<String>) -> Self {
        Error::Shape(message.into())
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidArgument(message.into())
    }
}
