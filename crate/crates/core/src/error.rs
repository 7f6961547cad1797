use thiserror::Error;

/// Errors produced by the certification toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid scenario: {0}")]
    Scenario(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("assignment out of range: {0}")]
    Assignment(String),

    #[error("factorization error: {0}")]
    Factorization(String),

    #[error("enumeration of {count} strategies exceeds the cap of {cap}")]
    Capacity { count: u128, cap: u128 },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
