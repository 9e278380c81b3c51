//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor shapes are incompatible for the requested operation.
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    /// An operation precondition was violated (bad axis, non-scalar loss, ...).
    #[error("contract violation in {op}: {msg}")]
    Contract { op: &'static str, msg: String },

    /// A numeric failure at a known location (NaN/Inf field output, ...).
    #[error("numeric error in {op}: {msg}")]
    Numeric { op: &'static str, msg: String },

    /// Input text contains a character outside the romanization alphabet.
    #[error("unknown character {ch:?} at byte offset {offset}")]
    UnknownCharacter { ch: char, offset: usize },

    /// Input text was empty or otherwise unusable for the frontend.
    #[error("frontend rejected input: {0}")]
    EmptyInput(String),

    /// Checkpoint file is malformed or does not match the model config.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// Corpus directory is malformed or inconsistent.
    #[error("corpus error: {0}")]
    Corpus(String),

    /// A `key = value` config file failed to parse.
    #[error("config error: {0}")]
    Config(String),

    /// Waveform/mel file reading failed.
    #[error("audio io error: {0}")]
    AudioIo(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn contract(op: &'static str, msg: impl Into<String>) -> Self {
        Error::Contract {
            op,
            msg: msg.into(),
        }
    }

    pub fn numeric(op: &'static str, msg: impl Into<String>) -> Self {
        Error::Numeric {
            op,
            msg: msg.into(),
        }
    }
}
