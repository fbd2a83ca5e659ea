//! Error type shared across the library.

use thiserror::Error;

/// Errors produced by tensor, model, and metric operations.
#[derive(Debug, Error)]
pub enum Error {
    /// A tensor or argument had a shape incompatible with the operation.
    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    ShapeMismatch {
        context: String,
        expected: String,
        got: String,
    },

    /// An operation produced or received a NaN/Inf value.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    /// A feature index was outside the input dimensionality.
    #[error("index {index} out of range for dimension {len}")]
    IndexOutOfRange { index: usize, len: usize },

    /// An ordering was expected to be a permutation of 0..d but was not.
    #[error("ordering is not a permutation of 0..{0}")]
    NotAPermutation(usize),

    /// A model file failed to parse or validate.
    #[error("invalid model file: {0}")]
    ModelFile(String),

    /// Catch-all for violated preconditions.
    #[error("{0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
