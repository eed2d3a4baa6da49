//! Exact geometric operators on the stream axis.
//!
//! The building blocks:
//!
//! - rank-2 skew generators `A = u v^T - v u^T` and their Cayley transform
//!   `Q = (I + (b/2)A)^{-1} (I - (b/2)A)`, orthogonal with det +1 for every
//!   finite `b`;
//! - Householder operators `H = I - b k k^T`, orthogonal iff `b` is 0 or 2,
//!   with `H k = (1-b) k`;
//! - the gated blend `g * QX + (1-g) * HX` that reaches both connected
//!   components of O(n) at the gate boundaries, plus the midpoint-collapse
//!   penalty `4g(1-g)` that pushes the gate there;
//! - the iterative Cayley retraction used by the approximate baseline, and
//!   explicit plane rotations for building near-pi targets.
//!
//! A rotation produced by the Cayley map can never have eigenvalue -1; the
//! cheap witness is `|det(Q + I)| > 0`, exposed as [`negation_margin`].
//! All functions are pure and safe to call concurrently.

mod blend;
mod cayley;
mod gate;
mod householder;
mod report;
mod rotation;
mod skew;

pub use blend::hybrid_blend;
pub use cayley::{
    cayley, cayley_angle, cayley_map, iterative_cayley_retraction, negation_margin,
};
pub use gate::{gate_penalty, GateVariant};
pub use householder::{householder, HouseholderOutcome};
pub use report::{orthogonality_report, OrthogonalReport};
pub use rotation::rotation_plane;
pub use skew::SkewGenerator;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("zero direction: |k| = {0:.3e} is below 1e-12")]
    ZeroDirection(f64),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("domain error: {0}")]
    DomainError(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("index error: {0}")]
    IndexError(String),
}
