//! Joint integrative semi-symmetric tensor PCA.
//!
//! Factorizes a pair of semi-symmetric data tensors sharing a sample mode —
//! e.g. two brain-connectivity modalities measured on the same subjects —
//! into joint low-rank components: per-factor network bases `V`, `W` and a
//! shared sample loading `u`. Includes generalized (diagonal-core) and
//! matrix-tensor variants, Tucker baselines, seeded simulation generators,
//! BIC rank selection, and an evaluation harness.

pub mod baselines;
pub mod deflate;
pub mod error;
pub mod eval;
pub mod fit;
pub mod io;
pub mod linalg;
pub mod rng;
pub mod select;
pub mod sim;
pub mod svg;
pub mod tensor;

pub use error::Error;
pub type Result<T> = std::result::Result<T, Error>;
