//! Dense 64-bit numeric kernel: small row-major matrices, pivoted LU
//! (solve / determinant), Sinkhorn-Knopp normalization, rank-agnostic
//! tensors, and a seeded, splittable pseudo-random stream.
//!
//! Everything here is deterministic: values are immutable after
//! construction and all operations are pure functions of their inputs,
//! so they are safe to share across threads. [`RandomStream`] is the one
//! stateful type; it is single-owner by design — derive named substreams
//! instead of sharing one stream between tasks.

mod error;
mod linalg;
mod matrix;
mod rng;
mod sinkhorn;
mod tensor;

pub use error::NumError;
pub use linalg::{det, mat_solve, LuFactors};
pub use matrix::Matrix;
pub use rng::RandomStream;
pub use sinkhorn::sinkhorn_project;
pub use tensor::Tensor;
