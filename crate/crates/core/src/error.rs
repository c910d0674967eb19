use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("variable `{name}`: {reason}")]
    InvalidVariable { name: String, reason: String },

    #[error("duplicate variable name `{0}`")]
    DuplicateVariable(String),

    #[error("invalid point: {0}")]
    InvalidPoint(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("Cholesky factorization failed: Gram matrix not positive definite after jitter {jitter:e}")]
    Factorization { jitter: f64 },

    #[error("all {restarts} hyperparameter restarts failed; last error: {last}")]
    HyperOptimization { restarts: usize, last: Box<Error> },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("objective returned non-finite value {value} at {point}")]
    NonFiniteObjective { point: String, value: f64 },

    #[error("row {row}: {reason}")]
    DataRow { row: usize, reason: String },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Wraps the error with the pipeline stage it came from.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// True when the error stems from invalid user input rather than a
    /// runtime failure.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::InvalidVariable { .. }
            | Error::DuplicateVariable(_)
            | Error::InvalidPoint(_)
            | Error::DimensionMismatch { .. }
            | Error::Config(_)
            | Error::DataRow { .. }
            | Error::Json(_) => true,
            Error::Stage { source, .. } => source.is_validation(),
            _ => false,
        }
    }
}
