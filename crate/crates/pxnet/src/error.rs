//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PxError {
    /// Arguments outside an operation's domain (bad indices, length mismatches, invalid ranges).
    #[error("domain error: {0}")]
    Domain(String),

    /// An exchangeable covariance matrix that is not positive definite.
    #[error("covariance parameters not positive definite: {0}")]
    NotPositiveDefinite(String),

    /// A linear system that should be solvable turned out singular.
    #[error("singular system in {0}")]
    Singular(String),

    /// Perfect or quasi-perfect separation in the independent probit fit.
    #[error("probit separation detected: {0}")]
    Separation(String),

    /// Data too degenerate to estimate from (e.g. no admissible relation pairs).
    #[error("degenerate data: {0}")]
    Degenerate(String),

    /// The design matrix is rank deficient.
    #[error("design matrix is rank deficient: {0}")]
    RankDeficient(String),

    /// An iterative routine failed numerically.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Malformed input data (CSV/JSON contents).
    #[error("invalid input: {0}")]
    Parse(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, PxError>;

impl PxError {
    /// True when the error indicates bad user input rather than a numeric breakdown.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            PxError::Domain(_)
                | PxError::Parse(_)
                | PxError::Csv(_)
                | PxError::Io(_)
                | PxError::Json(_)
        )
    }
}
