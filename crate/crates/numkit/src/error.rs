use thiserror::Error;

/// Errors produced by the numeric kernel.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumError {
    /// A pivot fell below `threshold` during elimination; the system is
    /// singular to working precision.
    #[error("singular matrix: pivot {pivot:.3e} below threshold {threshold:.3e} at column {col}")]
    SingularMatrix {
        pivot: f64,
        threshold: f64,
        col: usize,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value at index {0}")]
    NonFinite(usize),
}
