//! Approximate-Cayley baseline with parallel routing: the residual path is
//! a fixed-point Cayley retraction of a per-input full skew generator on
//! the stream axis; the compute path aggregates streams with row-softmax
//! weights, runs a narrow attention+MLP stack, and distributes the result
//! back with column-softmax weights. At desk scale the per-token mixer
//! generation is reduced to per-input (pooled) generation.

use crate::common::{self, embed_input, mlp_head_params, output_head};
use crate::config::{ModelConfig, ModelKind};
use crate::registry::{Architecture, ForwardOutput};
use nn::tape::{Tape, VarId};
use nn::{ParamBinding, ParamSpec};

pub struct Jpmhc;

/// Hidden width of the skew-generator head. Narrower than the generic
/// geo-hidden rule because the head reads the full 4x-wide embedding.
fn skew_hidden(cfg: &ModelConfig) -> usize {
    (cfg.n_embd / 8).max(1)
}

pub fn block_forward(
    cfg: &ModelConfig,
    tape: &mut Tape,
    p: &ParamBinding,
    block: usize,
    x: VarId,
) -> VarId {
    let n = cfg.n_streams.expect("validated");
    let prefix = format!("block{block}");
    let pooled = nn::mean_pool(tape, x).expect("non-empty sequence");
    let bs = tape.value(pooled).shape()[0];

    // Residual path: iterative Cayley retraction of the per-input skew
    // generator, applied on the stream axis.
    let head = mlp_head_params(p, &format!("{prefix}.skew"));
    let entries = nn::pooled_mlp(tape, pooled, head.w1, head.b1, head.w2, head.b2);
    let skew = tape.skew_from_lower(entries, n);
    let half = tape.scale(skew, cfg.retraction_alpha / 2.0);
    let mut y = x;
    for _ in 0..cfg.retraction_steps {
        let xy = tape.add(x, y);
        let moved = tape.stream_apply(xy, half, n);
        y = tape.add(x, moved);
    }

    // Compute path at the aggregated stream width.
    let w_pre_lin = tape.matmul(pooled, p.var(&format!("{prefix}.premix.w")));
    let w_pre_lin = tape.add_row_bias(w_pre_lin, p.var(&format!("{prefix}.premix.b")));
    let w_pre = tape.softmax_rows(w_pre_lin);
    let ln_in = tape.layer_norm(
        x,
        p.var(&format!("{prefix}.ln_in.g")),
        p.var(&format!("{prefix}.ln_in.b")),
    );
    let agg = tape.stream_aggregate(ln_in, w_pre, n);
    let ln_a = tape.layer_norm(
        agg,
        p.var(&format!("{prefix}.ln_a.g")),
        p.var(&format!("{prefix}.ln_a.b")),
    );
    let a = nn::causal_attention(
        tape,
        ln_a,
        &common::attention_params(p, &format!("{prefix}.attn")),
        cfg.n_heads,
    )
    .expect("validated shapes");
    let h = tape.add(agg, a);
    let ln_f = tape.layer_norm(
        h,
        p.var(&format!("{prefix}.ln_f.g")),
        p.var(&format!("{prefix}.ln_f.b")),
    );
    let f = nn::feed_forward(tape, ln_f, &common::ffn_params(p, &format!("{prefix}.ffn")));
    let h = tape.add(h, f);

    let w_post_lin = tape.matmul(pooled, p.var(&format!("{prefix}.postmix.w")));
    let w_post_lin = tape.add_row_bias(w_post_lin, p.var(&format!("{prefix}.postmix.b")));
    let w_post = tape.softmax_rows(w_post_lin);
    let f_out = tape.stream_distribute(h, w_post, n);
    let _ = bs;
    tape.add(y, f_out)
}

impl Architecture for Jpmhc {
    fn kind(&self) -> ModelKind {
        ModelKind::Jpmhc
    }

    fn param_specs(&self, cfg: &ModelConfig) -> Vec<ParamSpec> {
        let n = cfg.n_streams.unwrap_or(4);
        let fw = cfg.f_width();
        let mut specs = Vec::new();
        common::embedding_specs(cfg, &mut specs);
        for i in 0..cfg.n_layers {
            let prefix = format!("block{i}");
            common::norm_specs(&format!("{prefix}.ln_in"), cfg.n_embd, &mut specs);
            common::mlp_head_specs(
                &format!("{prefix}.skew"),
                cfg.n_embd,
                skew_hidden(cfg),
                n * (n - 1) / 2,
                &mut specs,
            );
            specs.push(common::gauss(format!("{prefix}.premix.w"), vec![cfg.n_embd, n]));
            specs.push(common::zeros(format!("{prefix}.premix.b"), vec![n]));
            specs.push(common::gauss(format!("{prefix}.postmix.w"), vec![cfg.n_embd, n]));
            specs.push(common::zeros(format!("{prefix}.postmix.b"), vec![n]));
            common::norm_specs(&format!("{prefix}.ln_a"), fw, &mut specs);
            common::attention_specs(&format!("{prefix}.attn"), fw, &mut specs);
            common::norm_specs(&format!("{prefix}.ln_f"), fw, &mut specs);
            common::ffn_specs(&format!("{prefix}.ffn"), fw, &mut specs);
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
