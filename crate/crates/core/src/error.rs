//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value encountered in {context}")]
    NonFinite { context: &'static str },

    #[error("matrix is not symmetric positive definite: {context}")]
    NotPositiveDefinite { context: &'static str },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("fixed-point iteration did not converge after {iterations} iterations")]
    FixedPointDiverged { iterations: usize },

    #[error("rejection sampler exceeded {cap} proposals; increase the mixing constant c")]
    RejectionCapExceeded { cap: usize },

    #[error("mode library is empty")]
    EmptyLibrary,

    #[error("reference mean has zero L1 norm")]
    ZeroNormReference,

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("malformed trace file: {0}")]
    MalformedTrace(String),
}

pub type Result<T> = std::result::Result<T, Error>;
