use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("column {column} has zero variance")]
    ZeroVariance { column: String },

    #[error("grid must be strictly increasing (violated at index {index})")]
    UnsortedGrid { index: usize },

    #[error("operation requires the erf activation, got {0}")]
    WrongActivation(String),

    #[error("kernel matrix is not positive definite even with jitter {max_jitter:e}")]
    Decomposition { max_jitter: f64 },

    #[error("predictive variance {value:e} is negative beyond tolerance")]
    NegativeVariance { value: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
