//! Error type shared across the crate.

use thiserror::Error;

/// Errors surfaced by tensor, network, GLM, and simulation operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: {detail}")]
    ShapeMismatch { context: String, detail: String },
    #[error("matrix is not symmetric (max asymmetry {max_asym:e} exceeds tolerance)")]
    NotSymmetric { max_asym: f64 },
    #[error("matrix is not positive definite (pivot {pivot:e} at index {index}, jitter ladder exhausted)")]
    NotPositiveDefinite { pivot: f64, index: usize },
    #[error("probability {0} outside [0, 1]")]
    InvalidProbability(f64),
    #[error("dropout rate {0} outside [0, 1)")]
    InvalidRate(f64),
    #[error("domain error in {context}: {detail}")]
    DomainError { context: String, detail: String },
    #[error("loss became non-finite at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("{failed} of {draws} per-draw GLM fits failed (limit {limit})")]
    TooManyGlmFailures { failed: usize, draws: usize, limit: usize },
    #[error("design matrix is rank deficient (column rank < {q})")]
    RankDeficient { q: usize },
    #[error("separation detected: coefficient norm {norm:e} diverged during IRLS")]
    Separation { norm: f64 },
    #[error("IRLS failed to converge within {max_iter} iterations")]
    NoConvergence { max_iter: usize },
    #[error("unsupported Matern smoothness {0} (supported: 0.5, 1.5, 2.5)")]
    UnsupportedSmoothness(f64),
    #[error("mixture components disagree in dimension: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to parse {path}: {detail}")]
    Parse { path: String, detail: String },
}

impl Error {
    pub fn shape(context: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            context: context.into(),
            detail: detail.into(),
        }
    }

    pub fn domain(context: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::DomainError {
            context: context.into(),
            detail: detail.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
