//! Trainable layers with analytic gradients over a minimal reverse-mode
//! tape: pooling, generator heads, stream-axis operator application,
//! layer norm, causal multi-head attention, and feed-forward blocks.
//!
//! The tape ([`Tape`]) evaluates eagerly and records one node per op;
//! [`Tape::backward`] returns leaf gradients for a scalar loss. Every op's
//! backward rule is validated against central finite differences (see
//! `gradcheck` and the crate tests), including the rule for the per-sample
//! Cayley solve.
//!
//! Forward/backward over one parameter set is single-threaded per model
//! instance (inner matmuls may fan out to a thread pool, with fixed
//! partitioning so results are bit-stable); distinct instances can run
//! fully in parallel.

pub mod gradcheck;
pub mod generators;
pub mod kernels;
pub mod layers;
pub mod params;
pub mod tape;

pub use generators::{
    batched_cayley, batched_householder, generators_forward, GeneratorOutputs, GeneratorParams,
    GeneratorVars, MlpHead,
};
pub use layers::{
    causal_attention, feed_forward, layer_norm, linear_3d, mean_pool, pooled_mlp, project_3d,
    AttentionParams, FeedForwardParams,
};
pub use params::{Init, ParamBinding, ParamEntry, ParamSet, ParamSpec};
pub use tape::{Gradients, Tape, VarId};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("empty sequence")]
    EmptySequence,
}
