//! Error type shared across the crate.

use thiserror::Error;

/// Everything that can go wrong while building tensors, fitting, or doing IO.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor construction or reshaping got inconsistent dimensions.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A slice violated the symmetry tolerance and cannot be symmetrized.
    #[error("slice {slice} is asymmetric: relative asymmetry {asymmetry:.3e} exceeds 1e-8")]
    Asymmetric { slice: usize, asymmetry: f64 },

    /// Invalid configuration (ranks, lambda, tolerances, grids, ...).
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Numerical failure during fitting (zero denominators, failed decompositions).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// File format violation when reading tensors or configs.
    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code buckets used by the CLI: 2 for usage/config errors,
    /// 3 for data or numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            _ => 3,
        }
    }
}
