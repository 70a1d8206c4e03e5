use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the solver, the model format and the data pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid value {value} for `{name}`: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("{0} must not be empty")]
    Empty(&'static str),

    #[error("non-finite value in {what} at index {index}")]
    NonFinite { what: &'static str, index: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("a two-coordinate update needs distinct indices, got {0} twice")]
    SameIndex(usize),

    #[error("update at index {index} leaves the feasible set (alpha={alpha}, beta={beta})")]
    Infeasible { index: usize, alpha: f64, beta: f64 },

    #[error("incremental {what} drifted from recomputation: {incremental} vs {recomputed}")]
    Inconsistent {
        what: &'static str,
        incremental: f64,
        recomputed: f64,
    },

    #[error("cross-validation needs 2 <= folds <= n, got folds={folds}, n={n}")]
    DegenerateFolds { folds: usize, n: usize },

    #[error("line {line}, column {column}: {message}")]
    Parse { line: u64, column: usize, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unsupported model format version {found} (this build reads version {supported})")]
    ModelVersion { found: u32, supported: u32 },

    #[error("model file truncated: expected {expected}")]
    ModelTruncated { expected: String },

    #[error("model file line {line}: expected {expected} fields, found {found}")]
    ModelFieldCount { line: usize, expected: usize, found: usize },

    #[error("model file line {line}: {message}")]
    ModelMalformed { line: usize, message: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn positive(name: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(Error::InvalidParameter {
            name,
            value,
            reason: "must be finite and strictly positive",
        })
    }
}
