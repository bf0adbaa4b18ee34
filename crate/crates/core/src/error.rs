use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected} outcomes, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("point lies outside the simplex (min barycentric weight {min_weight:e})")]
    OutOfDomain { min_weight: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no analytic region probability for {0}; use the Monte Carlo estimator")]
    NotAnalytic(&'static str),

    #[error("control region absorbs all probability mass")]
    DegenerateTruncation,

    #[error("{what} = {value} exceeds the enumeration limit {limit}")]
    TooLarge { what: &'static str, value: usize, limit: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
