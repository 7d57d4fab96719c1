use thiserror::Error;

use crate::ClientId;

#[derive(Debug, Error)]
pub enum Error {
    #[error("length mismatch in {what}: {left} vs {right}")]
    LengthMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },

    #[error("class index {index} out of range for {classes} classes")]
    ClassOutOfRange { index: usize, classes: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("dimension mismatch: expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid decision matrix: {0}")]
    InvalidMatrix(String),

    #[error("invalid criteria weights: {0}")]
    InvalidWeights(String),

    #[error("unknown client {0}")]
    UnknownClient(ClientId),

    #[error("duplicate client {0}")]
    DuplicateClient(ClientId),

    #[error("no smoothed trust recorded for client {0}")]
    MissingTrust(ClientId),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("no active clients left to aggregate")]
    NoActiveClients,

    #[error("cannot split {samples} samples across {clients} clients")]
    TooManyClients { clients: usize, samples: usize },

    #[error("invalid config `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),

    #[error("invalid dataset file: {0}")]
    DatasetFile(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
