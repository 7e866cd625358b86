use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("non-finite market bounds at step {step}")]
    NonFiniteBounds { step: usize },

    #[error("checkpoint {path} was written by a different configuration (expected hash {expected}, found {found})")]
    CheckpointMismatch { path: PathBuf, expected: String, found: String },

    #[error("unknown metric `{name}`; available: {available}")]
    UnknownMetric { name: String, available: String },

    #[error("missing output for regime {regime} ({path}); available: {available}")]
    MissingRegime { regime: String, path: PathBuf, available: String },

    #[error("malformed input {path}: {reason}")]
    Malformed { path: PathBuf, reason: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
