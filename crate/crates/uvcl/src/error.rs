//! Error types shared across the crate.

use std::path::PathBuf;

/// Errors raised by any uvcl module.
#[derive(Debug, thiserror::Error)]
pub enum UvclError {
    #[error("empty batch")]
    EmptyBatch,

    #[error("non-finite value in record {record}")]
    NonFiniteValue { record: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("dimension must be positive")]
    ZeroDimension,

    #[error("bad magic in {path}: not a feature file")]
    BadMagic { path: PathBuf },

    #[error("unsupported feature file version {0}")]
    BadVersion(u32),

    #[error("truncated payload in {path}: need {need} bytes, have {have}")]
    Truncated {
        path: PathBuf,
        need: usize,
        have: usize,
    },

    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("theta1 undefined: fewer than 2 clusters")]
    Theta1Undefined,

    #[error("theta1 not set")]
    Theta1Unset,

    #[error("unknown cluster id {0}")]
    UnknownCluster(usize),

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("non-finite cost entry at ({0}, {1})")]
    NonFiniteCost(usize, usize),

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("test set has no labels")]
    UnlabeledTestSet,

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl UvclError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        UvclError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, UvclError>;
