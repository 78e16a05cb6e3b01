//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    /// Two operands whose shapes cannot be combined.
    #[error("{op}: dimension mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    /// A shape that is invalid on its own (zero dim, wrong rank, ...).
    #[error("{op}: invalid shape {shape:?} ({reason})")]
    InvalidShape {
        op: &'static str,
        shape: Vec<usize>,
        reason: String,
    },

    #[error("{op}: empty tensor")]
    EmptyTensor { op: &'static str },

    /// NaN or infinity showed up in a value or gradient.
    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    /// Cosine similarity of a vector with norm below the 1e-12 guard.
    #[error("cosine similarity: degenerate vector (norm {norm:.3e} < 1e-12)")]
    DegenerateVector { norm: f64 },

    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },

    #[error("{what}: index {index} out of range (length {len})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    /// Mask with (near-)zero total weight; moments are undefined.
    #[error("degenerate mask: total weight {sum:.3e} below 1e-9")]
    DegenerateMask { sum: f64 },

    /// Regression design without variance in the predictor.
    #[error("degenerate regression design: {0}")]
    DegenerateDesign(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
