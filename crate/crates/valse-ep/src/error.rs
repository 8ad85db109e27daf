//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite input in {0}")]
    NonFinite(&'static str),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("{0} has zero norm")]
    ZeroNorm(&'static str),

    #[error("value {0} is not a quantizer output level")]
    UnknownLevel(f64),

    #[error("matrix is singular or ill-conditioned (condition number {condition:.3e})")]
    SingularMatrix { condition: f64 },

    #[error("infeasible configuration: {0}")]
    Infeasible(String),
}

pub type Result<T> = std::result::Result<T, Error>;
