use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("layout out of bounds: start {start} + len {len} > total {total}")]
    Layout {
        start: usize,
        len: usize,
        total: usize,
    },

    #[error("token id {id} is outside the vocabulary (size {vocab})")]
    InvalidToken { id: u32, vocab: usize },

    #[error("unknown base symbol {0}")]
    UnknownSymbol(u32),

    #[error("sequence of length {len} exceeds max_seq_len {max}")]
    SequenceTooLong { len: usize, max: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("bad file format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Shape {
            context,
            expected,
            actual,
        })
    }
}
