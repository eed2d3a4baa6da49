//! Standard pre-norm transformer: additive identity shortcuts around
//! attention and feed-forward.

use crate::common::{self, embed_input, gpt_attn_sublayer, gpt_ffn_sublayer, output_head};
use crate::config::{ModelConfig, ModelKind};
use crate::registry::{Architecture, ForwardOutput};
use nn::tape::{Tape, VarId};
use nn::{ParamBinding, ParamSpec};

pub struct Gpt;

pub fn block_specs(prefix: &str, d: usize, out: &mut Vec<ParamSpec>) {
    common::norm_specs(&format!("{prefix}.ln1"), d, out);
    common::attention_specs(&format!("{prefix}.attn"), d, out);
    common::norm_specs(&format!("{prefix}.ln2"), d, out);
    common::ffn_specs(&format!("{prefix}.ffn"), d, out);
}

pub fn block_forward(
    cfg: &ModelConfig,
    tape: &mut Tape,
    p: &ParamBinding,
    block: usize,
    x: VarId,
) -> VarId {
    let prefix = format!("block{block}");
    let x = gpt_attn_sublayer(tape, p, &prefix, cfg.n_heads, x);
    gpt_ffn_sublayer(tape, p, &prefix, x)
}

impl Architecture for Gpt {
    fn kind(&self) -> ModelKind {
        ModelKind::Gpt
    }

    fn param_specs(&self, cfg: &ModelConfig) -> Vec<ParamSpec> {
        let mut specs = Vec::new();
        common::embedding_specs(cfg, &mut specs);
        for i in 0..cfg.n_layers {
            block_specs(&format!("block{i}"), cfg.n_embd, &mut specs);
        }
        common::head_specs(cfg, &mut specs);
        specs
    }

    fn forward(
        &self,
        cfg: &ModelConfig,
        tape: &mut Tape,
        p: &ParamBinding,
        input: VarId,
    ) -> ForwardOutput {
        let mut x = embed_input(tape, p, input);
        for i in 0..cfg.n_layers {
            x = block_forward(cfg, tape, p, i, x);
        }
        ForwardOutput {
            output: output_head(tape, p, x),
            gammas: Vec::new(),
        }
    }
}
