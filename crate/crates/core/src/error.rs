//! Error type shared by all modules of the crate.

use thiserror::Error;

/// Errors produced by construction, validation and numerical routines.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// Shape or dimension of an input does not match what the operation needs.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// A numerical routine failed (non-finite input, failed factorization,
    /// non-positive eigenvalue where positivity is required).
    #[error("numeric error: {0}")]
    Numeric(String),

    /// The caller violated a precondition that is not about shapes.
    #[error("usage error: {0}")]
    Usage(String),

    /// Input is structurally valid but carries no usable information
    /// (e.g. an all-zero affinity matrix).
    #[error("degenerate input: {0}")]
    Degenerate(String),
}

pub type Result<T> = std::result::Result<T, Error>;
