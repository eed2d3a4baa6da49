//! The benchmark architectures, assembled from the nn layer kit: a plain
//! pre-norm transformer, the input-dependent Householder baseline, the
//! Sinkhorn-mixed multi-stream baseline, the iterative-Cayley parallel
//! baseline, and the gated Cayley/Householder hybrid.
//!
//! Every variant sits behind [`Architecture`] and is selected by name
//! through [`registry`]/[`lookup`], so configs and the CLI can switch
//! models at runtime. All five accept identical dataset tensors and
//! produce outputs of identical shape.

mod checkpoint;
mod common;
mod config;
mod ddl;
mod edelta;
mod gpt;
mod jpmhc;
mod mhc;
mod model;
mod registry;

pub use checkpoint::{read_checkpoint, write_checkpoint};
pub use config::{ModelConfig, ModelKind, GEO_HIDDEN_RATIO};
pub use model::{build_model, count_params, Model, ModelForward};
pub use registry::{lookup, lookup_name, registry, Architecture, ForwardOutput};

pub use ddl::block_forward as ddl_block_forward;
pub use edelta::block_forward as edelta_block_forward;
pub use gpt::block_forward as gpt_block_forward;
pub use jpmhc::block_forward as jpmhc_block_forward;
pub use mhc::{block_forward as mhc_block_forward, sinkhorn_mixer};

use nn::tape::{Tape, VarId};
use nn::ParamBinding;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("checkpoint format error: {0}")]
    Format(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Forward one block of a non-hybrid architecture.
pub fn baseline_block_forward(
    kind: ModelKind,
    cfg: &ModelConfig,
    tape: &mut Tape,
    params: &ParamBinding,
    block: usize,
    x: VarId,
) -> VarId {
    match kind {
        ModelKind::Gpt => gpt_block_forward(cfg, tape, params, block, x),
        ModelKind::Ddl => ddl_block_forward(cfg, tape, params, block, x),
        ModelKind::Mhc => mhc_block_forward(cfg, tape, params, block, x),
        ModelKind::Jpmhc => jpmhc_block_forward(cfg, tape, params, block, x),
        ModelKind::Edelta => panic!("edelta blocks return gates; use edelta_block_forward"),
    }
}
