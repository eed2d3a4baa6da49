//! Multi-stream baseline with doubly stochastic residual mixing: a learned
//! logit matrix per sublayer is pushed through exp + Sinkhorn row/column
//! normalization every forward pass, then applied across the stream axis.
//! Learned (identity-initialized) n x n stream maps wrap the compute path.

use crate::common::{self, embed_input, output_head};
use crate::config::{ModelConfig, ModelKind};
use crate::registry::{Architecture, ForwardOutput};
use nn::tape::{Tape, VarId};
use nn::{Init, ParamBinding, ParamSpec};

pub struct Mhc;

/// exp(logits) projected toward doubly stochastic by alternating row and
/// column normalization, differentiably.
pub fn sinkhorn_mixer(tape: &mut Tape, logits: VarId, iters: usize) -> VarId {
    let mut m = tape.exp(logits);
    for _ in 0..iters {
        m = tape.row_normalize(m);
        m = tape.col_normalize(m);
    }
    m
}

fn mix_specs(prefix: &str, n: usize, out: &mut Vec<ParamSpec>) {
    out.push(common::gauss(format!("{prefix}.logits"), vec![n, n]));
    out.push(ParamSpec::new(format!("{prefix}.pre"), vec![n, n], Init::Identity));
    out.push(ParamSpec::new(format!("{prefix}.post"), vec![n, n], Init::Identity));
}

#[allow(clippy::too_many_arguments)]
fn mixed_sublayer(
    cfg: &ModelConfig,
    tape: &mut Tape,
    p: &ParamBinding,
    mix_prefix: &str,
    x: VarId,
    f_out: VarId,
) -> VarId {
    let n = cfg.n_streams.expect("validated");
    let bs = tape.value(x).shape()[0];
    let mixer = sinkhorn_mixer(tape, p.var(&format!("{mix_prefix}.logits")), cfg.sinkhorn_iters);
    let mixer_b = tape.broadcast_batch(mixer, bs);
    let mixed = tape.stream_apply(x, mixer_b, n);
    tape.add(mixed, f_out)
}

pub fn block_forward(
    cfg: &ModelConfig,
    tape: &mut Tape,
    p: &ParamBinding,
    block: usize,
    x: VarId,
) -> VarId {
    let n = cfg.n_streams.expect("validated");
    let bs = tape.value(x).shape()[0];
    let prefix = format!("block{block}");

    // Attention site.
    let mixp = format!("{prefix}.attn_mix");
    let ln = tape.layer_norm(
        x,
        p.var(&format!("{prefix}.ln1.g")),
        p.var(&format!("{prefix}.ln1.b")),
    );
    let pre = tape.broadcast_batch(p.var(&format!("{mixp}.pre")), bs);
    let f_in = tape.stream_apply(ln, pre, n);
    let a = nn::causal_attention(
        tape,
        f_in,
        &common::attention_params(p, &format!("{prefix}.attn")),
        cfg.n_heads,
    )
    .expect("validated shapes");
    let post = tape.broadcast_batch(p.var(&format!("{mixp}.post")), bs);
    let a_out = tape.stream_apply(a, post, n);
    let x = mixed_sublayer(cfg, tape, p, &mixp, x, a_out);

    // Feed-forward site.
    let mixp = format!("{prefix}.ffn_mix");
    let ln = tape.layer_norm(
        x,
        p.var(&format!("{prefix}.ln2.g")),
        p.var(&format!("{prefix}.ln2.b")),
    );
    let pre = tape.broadcast_batch(p.var(&format!("{mixp}.pre")), bs);
    let f_in = tape.stream_apply(ln, pre, n);
    let f = nn::feed_forward(tape, f_in, &common::ffn_params(p, &format!("{prefix}.ffn")));
    let post = tape.broadcast_batch(p.var(&format!("{mixp}.post")), bs);
    let f_out = tape.stream_apply(f, post, n);
    mixed_sublayer(cfg, tape, p, &mixp, x, f_out)
}

impl Architecture for Mhc {
    fn kind(&self) -> ModelKind {
        ModelKind::Mhc
    }

    fn param_specs(&self, cfg: &ModelConfig) -> Vec<ParamSpec> {
        let n = cfg.n_streams.unwrap_or(4);
        let mut specs = Vec::new();
        common::embedding_specs(cfg, &mut specs);
        for i in 0..cfg.n_layers {
            let prefix = format!("block{i}");
            common::norm_specs(&format!("{prefix}.ln1"), cfg.n_embd, &mut specs);
            common::attention_specs(&format!("{prefix}.attn"), cfg.n_embd, &mut specs);
            mix_specs(&format!("{prefix}.attn_mix"), n, &mut specs);
            common::norm_specs(&format!("{prefix}.ln2"), cfg.n_embd, &mut specs);
            common::ffn_specs(&format!("{prefix}.ffn"), cfg.n_embd, &mut specs);
            mix_specs(&format!("{prefix}.ffn_mix"), n, &mut specs);
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
