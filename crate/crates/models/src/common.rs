//! Shared parameter layouts and graph fragments: continuous-input embedding
//! with learned positions, the attention/MLP sublayer stack, and the output
//! head. Weight init is small-Gaussian (std 0.02), biases zero, norms at
//! identity; pre/post projections start as the identity matrix.

use crate::config::ModelConfig;
use nn::tape::{Tape, VarId};
use nn::{AttentionParams, FeedForwardParams, GeneratorParams, Init, MlpHead, ParamBinding, ParamSpec};

pub const W_STD: f64 = 0.02;

pub fn gauss(name: String, shape: Vec<usize>) -> ParamSpec {
    ParamSpec::new(name, shape, Init::Gauss(W_STD))
}

pub fn zeros(name: String, shape: Vec<usize>) -> ParamSpec {
    ParamSpec::new(name, shape, Init::Zeros)
}

pub fn norm_specs(prefix: &str, d: usize, out: &mut Vec<ParamSpec>) {
    out.push(ParamSpec::new(format!("{prefix}.g"), vec![d], Init::Ones));
    out.push(zeros(format!("{prefix}.b"), vec![d]));
}

pub fn attention_specs(prefix: &str, d: usize, out: &mut Vec<ParamSpec>) {
    for w in ["wq", "wk", "wv", "wo"] {
        out.push(gauss(format!("{prefix}.{w}"), vec![d, d]));
    }
    for b in ["bq", "bk", "bv", "bo"] {
        out.push(zeros(format!("{prefix}.{b}"), vec![d]));
    }
}

pub fn ffn_specs(prefix: &str, d: usize, out: &mut Vec<ParamSpec>) {
    out.push(gauss(format!("{prefix}.w1"), vec![d, 4 * d]));
    out.push(zeros(format!("{prefix}.b1"), vec![4 * d]));
    out.push(gauss(format!("{prefix}.w2"), vec![4 * d, d]));
    out.push(zeros(format!("{prefix}.b2"), vec![d]));
}

/// Two-layer GELU head from width `d_in` through `hidden` to `d_out`.
pub fn mlp_head_specs(prefix: &str, d_in: usize, hidden: usize, d_out: usize, out: &mut Vec<ParamSpec>) {
    out.push(gauss(format!("{prefix}.w1"), vec![d_in, hidden]));
    out.push(zeros(format!("{prefix}.b1"), vec![hidden]));
    out.push(gauss(format!("{prefix}.w2"), vec![hidden, d_out]));
    out.push(zeros(format!("{prefix}.b2"), vec![d_out]));
}

/// One full generator-head site (u, v, k, beta heads plus the linear gate).
pub fn generator_specs(prefix: &str, cfg: &ModelConfig, n: usize, out: &mut Vec<ParamSpec>) {
    let d = cfg.n_embd;
    let hidden = cfg.geo_hidden();
    mlp_head_specs(&format!("{prefix}.u"), d, hidden, n, out);
    mlp_head_specs(&format!("{prefix}.v"), d, hidden, n, out);
    mlp_head_specs(&format!("{prefix}.k"), d, hidden, n, out);
    mlp_head_specs(&format!("{prefix}.beta"), d, hidden, 1, out);
    out.push(zeros(format!("{prefix}.gate_w"), vec![d, 1]));
    out.push(ParamSpec::new(
        format!("{prefix}.gate_b"),
        vec![1],
        Init::Const(cfg.init_gate_bias),
    ));
}

pub fn embedding_specs(cfg: &ModelConfig, out: &mut Vec<ParamSpec>) {
    out.push(gauss("embed.w".into(), vec![cfg.task_dim, cfg.n_embd]));
    out.push(zeros("embed.b".into(), vec![cfg.n_embd]));
    out.push(gauss("pos".into(), vec![cfg.seq_len, cfg.n_embd]));
}

pub fn head_specs(cfg: &ModelConfig, out: &mut Vec<ParamSpec>) {
    norm_specs("final_ln", cfg.n_embd, out);
    out.push(gauss("head.w".into(), vec![cfg.n_embd, cfg.task_dim]));
    out.push(zeros("head.b".into(), vec![cfg.task_dim]));
}

pub fn attention_params(p: &ParamBinding, prefix: &str) -> AttentionParams {
    AttentionParams {
        wq: p.var(&format!("{prefix}.wq")),
        bq: p.var(&format!("{prefix}.bq")),
        wk: p.var(&format!("{prefix}.wk")),
        bk: p.var(&format!("{prefix}.bk")),
        wv: p.var(&format!("{prefix}.wv")),
        bv: p.var(&format!("{prefix}.bv")),
        wo: p.var(&format!("{prefix}.wo")),
        bo: p.var(&format!("{prefix}.bo")),
    }
}

pub fn ffn_params(p: &ParamBinding, prefix: &str) -> FeedForwardParams {
    FeedForwardParams {
        w1: p.var(&format!("{prefix}.w1")),
        b1: p.var(&format!("{prefix}.b1")),
        w2: p.var(&format!("{prefix}.w2")),
        b2: p.var(&format!("{prefix}.b2")),
    }
}

pub fn mlp_head_params(p: &ParamBinding, prefix: &str) -> MlpHead {
    MlpHead {
        w1: p.var(&format!("{prefix}.w1")),
        b1: p.var(&format!("{prefix}.b1")),
        w2: p.var(&format!("{prefix}.w2")),
        b2: p.var(&format!("{prefix}.b2")),
    }
}

pub fn generator_params(p: &ParamBinding, prefix: &str) -> GeneratorParams {
    GeneratorParams {
        u: mlp_head_params(p, &format!("{prefix}.u")),
        v: mlp_head_params(p, &format!("{prefix}.v")),
        k: mlp_head_params(p, &format!("{prefix}.k")),
        beta: mlp_head_params(p, &format!("{prefix}.beta")),
        gate_w: p.var(&format!("{prefix}.gate_w")),
        gate_b: p.var(&format!("{prefix}.gate_b")),
    }
}

/// Input embedding: affine task_dim -> n_embd plus learned positions.
pub fn embed_input(tape: &mut Tape, p: &ParamBinding, x: VarId) -> VarId {
    let emb = nn::linear_3d(tape, x, p.var("embed.w"), Some(p.var("embed.b")));
    tape.add_positional(emb, p.var("pos"))
}

/// Final norm plus affine head back to task_dim.
pub fn output_head(tape: &mut Tape, p: &ParamBinding, x: VarId) -> VarId {
    let ln = tape.layer_norm(x, p.var("final_ln.g"), p.var("final_ln.b"));
    nn::linear_3d(tape, ln, p.var("head.w"), Some(p.var("head.b")))
}

/// Pre-norm attention sublayer with an additive shortcut.
pub fn gpt_attn_sublayer(
    tape: &mut Tape,
    p: &ParamBinding,
    prefix: &str,
    n_heads: usize,
    x: VarId,
) -> VarId {
    let ln = tape.layer_norm(
        x,
        p.var(&format!("{prefix}.ln1.g")),
        p.var(&format!("{prefix}.ln1.b")),
    );
    let a = nn::causal_attention(tape, ln, &attention_params(p, &format!("{prefix}.attn")), n_heads)
        .expect("attention shapes are validated by the config");
    tape.add(x, a)
}

/// Pre-norm feed-forward sublayer with an additive shortcut.
pub fn gpt_ffn_sublayer(tape: &mut Tape, p: &ParamBinding, prefix: &str, x: VarId) -> VarId {
    let ln = tape.layer_norm(
        x,
        p.var(&format!("{prefix}.ln2.g")),
        p.var(&format!("{prefix}.ln2.b")),
    );
    let f = nn::feed_forward(tape, ln, &ffn_params(p, &format!("{prefix}.ffn")));
    tape.add(x, f)
}
