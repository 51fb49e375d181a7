use thiserror::Error;

/// Errors raised by the discretization, assembly and adaptive driver.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("basis index {index} out of range (0..{count})")]
    Index { index: usize, count: usize },

    #[error("parameter {t} outside the domain [{a}, {b})")]
    Domain { t: f64, a: f64, b: f64 },

    #[error("unsupported degree: {0}")]
    UnsupportedDegree(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("refinement error: {0}")]
    Refinement(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("matrix is not positive definite (pivot {pivot} at row {row}, dimension {dim})")]
    Conditioning { row: usize, pivot: f64, dim: usize },

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
