use thiserror::Error;

/// Errors produced by any stage of the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at {path}: {message}")]
    Parse { path: String, message: String },

    #[error("unknown section id {0}")]
    UnknownSection(usize),

    #[error("token index {index} out of range (sequence length {len})")]
    TokenOutOfRange { index: usize, len: usize },

    #[error("linearized sequence error at token {offset}: {reason}")]
    Linearized { offset: usize, reason: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("token id {0} out of vocabulary (size {1})")]
    OutOfVocab(usize, usize),

    #[error("training diverged at step {step}: loss is not finite")]
    Diverged { step: usize },

    #[error("sample id mismatch: {0}")]
    IdMismatch(String),

    #[error("hierarchies do not contain the same pairs: {0}")]
    PairSetMismatch(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
