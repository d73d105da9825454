use std::path::PathBuf;

use thiserror::Error;

use crate::models::ModelKind;
use crate::training::TrainHistory;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("word {word:?} has {len} characters, longer than the maximum of {max_len}")]
    LengthExceeded { word: String, len: usize, max_len: usize },

    #[error("index {index} out of range (limit {limit})")]
    IndexOutOfRange { index: usize, limit: usize },

    #[error("{}line {line}: {message}", path.as_ref().map(|p| format!("{}: ", p.display())).unwrap_or_default())]
    Parse { path: Option<PathBuf>, line: usize, message: String },

    #[error("dataset too small: {n} words, need at least {min}")]
    DatasetTooSmall { n: usize, min: usize },

    #[error("no word ends with suffix {0:?}; utrum fraction is undefined")]
    UndefinedFraction(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite gradient in tensor {0}")]
    NonFiniteGradient(String),

    #[error("training diverged at epoch {epoch}: non-finite training loss")]
    Diverged { epoch: usize, history: Box<TrainHistory> },

    #[error("not a model file (bad magic)")]
    BadMagic,

    #[error("unsupported model file version {0}")]
    UnsupportedVersion(u32),

    #[error("model file checksum mismatch (stored {stored:#018x}, computed {computed:#018x})")]
    Checksum { stored: u64, computed: u64 },

    #[error("model file truncated")]
    Truncated,

    #[error("malformed model file: {0}")]
    MalformedModel(String),

    #[error("expected a {expected} model, file holds a {found} model")]
    KindMismatch { expected: ModelKind, found: ModelKind },

    #[error("unsupported model: {0}")]
    UnsupportedModel(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
