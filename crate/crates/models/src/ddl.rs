//! Delta-style baseline: the identity shortcut of each sublayer is replaced
//! by an input-dependent Householder operator `H_beta = I - beta k k^T`
//! acting on the full embedding axis, with `k` and `beta` produced from the
//! pooled block input. Orthogonal only when beta hits 0 or 2.

use crate::common::{self, embed_input, mlp_head_params, output_head};
use crate::config::{ModelConfig, ModelKind};
use crate::registry::{Architecture, ForwardOutput};
use nn::tape::{Tape, VarId};
use nn::{ParamBinding, ParamSpec};

pub struct Ddl;

fn house_specs(prefix: &str, cfg: &ModelConfig, out: &mut Vec<ParamSpec>) {
    let d = cfg.n_embd;
    let hidden = cfg.geo_hidden();
    common::mlp_head_specs(&format!("{prefix}.k"), d, hidden, d, out);
    common::mlp_head_specs(&format!("{prefix}.beta"), d, hidden, 1, out);
}

fn house_shortcut(
    tape: &mut Tape,
    p: &ParamBinding,
    prefix: &str,
    x: VarId,
) -> VarId {
    let pooled = nn::mean_pool(tape, x).expect("non-empty sequence");
    let bs = tape.value(pooled).shape()[0];
    let k_head = mlp_head_params(p, &format!("{prefix}.k"));
    let k_raw = nn::pooled_mlp(tape, pooled, k_head.w1, k_head.b1, k_head.w2, k_head.b2);
    let k = tape.normalize_rows(k_raw);
    let b_head = mlp_head_params(p, &format!("{prefix}.beta"));
    let beta_raw = nn::pooled_mlp(tape, pooled, b_head.w1, b_head.b1, b_head.w2, b_head.b2);
    let beta_sp = tape.softplus(beta_raw);
    let beta = tape.reshape(beta_sp, vec![bs]);
    tape.householder_apply(x, k, beta)
}

pub fn block_forward(
    cfg: &ModelConfig,
    tape: &mut Tape,
    p: &ParamBinding,
    block: usize,
    x: VarId,
) -> VarId {
    let prefix = format!("block{block}");
    // Attention sublayer with the Householder shortcut.
    let short = house_shortcut(tape, p, &format!("{prefix}.attn_house"), x);
    let ln = tape.layer_norm(
        x,
        p.var(&format!("{prefix}.ln1.g")),
        p.var(&format!("{prefix}.ln1.b")),
    );
    let a = nn::causal_attention(
        tape,
        ln,
        &common::attention_params(p, &format!("{prefix}.attn")),
        cfg.n_heads,
    )
    .expect("validated shapes");
    let x = tape.add(short, a);

    // Feed-forward sublayer, same structure.
    let short = house_shortcut(tape, p, &format!("{prefix}.ffn_house"), x);
    let ln = tape.layer_norm(
        x,
        p.var(&format!("{prefix}.ln2.g")),
        p.var(&format!("{prefix}.ln2.b")),
    );
    let f = nn::feed_forward(tape, ln, &common::ffn_params(p, &format!("{prefix}.ffn")));
    tape.add(short, f)
}

impl Architecture for Ddl {
    fn kind(&self) -> ModelKind {
        ModelKind::Ddl
    }

    fn param_specs(&self, cfg: &ModelConfig) -> Vec<ParamSpec> {
        let mut specs = Vec::new();
        common::embedding_specs(cfg, &mut specs);
        for i in 0..cfg.n_layers {
            let prefix = format!("block{i}");
            common::norm_specs(&format!("{prefix}.ln1"), cfg.n_embd, &mut specs);
            common::attention_specs(&format!("{prefix}.attn"), cfg.n_embd, &mut specs);
            house_specs(&format!("{prefix}.attn_house"), cfg, &mut specs);
            common::norm_specs(&format!("{prefix}.ln2"), cfg.n_embd, &mut specs);
            common::ffn_specs(&format!("{prefix}.ffn"), cfg.n_embd, &mut specs);
            house_specs(&format!("{prefix}.ffn_house"), cfg, &mut specs);
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
