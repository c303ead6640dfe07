use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("not symmetric: {0}")]
    NotSymmetric(String),
    #[error("non-finite evaluation at coordinate {0}")]
    NonFiniteEvaluation(usize),
    #[error("empty sample")]
    EmptySample,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("indefinite witness gram (quadratic form {0:e})")]
    IndefiniteWitnessGram(f64),
    #[error("oracle did not converge (gradient norm {0:e} after {1} iterations)")]
    OracleDidNotConverge(f64, usize),
    #[error("no analytic ground truth for this query")]
    NoGroundTruth,
    #[error("density underflow")]
    DensityUnderflow,
    #[error("empty batch {0}")]
    EmptyBatch(usize),
    #[error("non-finite gradient")]
    NonFiniteGradient,
    #[error("insufficient exploration data: requested {requested}, available {available}")]
    InsufficientExplorationData { requested: usize, available: usize },
    #[error("empty buffer")]
    EmptyBuffer,
    #[error("eigendecomposition failed to converge")]
    EigenFailure,
    #[error("invalid config `{key}`: {reason}")]
    InvalidConfig { key: String, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            key: key.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
