use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed json in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("invalid manifest: {0}")]
    Manifest(String),

    #[error("payload has {actual} samples but manifest declares {expected}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("non-finite sample at index {0}")]
    NonFiniteSample(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("signal of length {length} too short for decomposition level {level} with {filter_len}-tap filters")]
    SignalTooShort {
        length: usize,
        level: usize,
        filter_len: usize,
    },

    #[error("invalid wavelet filter `{name}`: {reason}")]
    InvalidFilter { name: String, reason: String },

    #[error("invalid probability vector: {0}")]
    InvalidProbabilities(String),

    #[error("class {class} outside 1..={k}")]
    ClassOutOfRange { class: usize, k: usize },

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },

    #[error("non-finite gradient at parameter {0}")]
    NonFiniteGradient(usize),

    #[error("training diverged at iteration {iteration} (loss = {loss})")]
    Diverged { iteration: usize, loss: f64 },

    #[error("empty confusion matrix")]
    EmptyConfusion,

    #[error("split error: {0}")]
    Split(String),

    #[error("image encoding failed: {0}")]
    Image(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}
