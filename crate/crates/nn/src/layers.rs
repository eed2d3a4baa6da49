//! Layer-level graph builders on top of the tape ops.

use crate::tape::{Tape, VarId};
use crate::NnError;

/// Mean over the sequence axis: (B, S, D) -> (B, D).
pub fn mean_pool(tape: &mut Tape, x: VarId) -> Result<VarId, NnError> {
    let shape = tape.value(x).shape();
    if shape.len() != 3 {
        return Err(NnError::ShapeMismatch(format!(
            "mean_pool expects rank-3 input, got {shape:?}"
        )));
    }
    if shape[1] == 0 {
        return Err(NnError::EmptySequence);
    }
    Ok(tape.mean_axis1(x))
}

/// Per-position affine map on a rank-3 tensor: (B, S, Din) -> (B, S, Dout).
pub fn linear_3d(tape: &mut Tape, x: VarId, w: VarId, b: Option<VarId>) -> VarId {
    assert_eq!(tape.value(x).rank(), 3);
    match b {
        Some(b) => tape.affine(x, w, b),
        None => tape.matmul(x, w),
    }
}

/// Per-position map by the transpose of a square matrix: rows of `x` are
/// treated as column vectors, so this computes `m . x` at every position.
pub fn project_3d(tape: &mut Tape, x: VarId, m: VarId) -> VarId {
    assert_eq!(tape.value(x).rank(), 3);
    tape.matmul_nt(x, m)
}

/// Normalize the last axis, then apply learned gain/shift.
pub fn layer_norm(tape: &mut Tape, x: VarId, gain: VarId, bias: VarId) -> VarId {
    tape.layer_norm(x, gain, bias)
}

pub struct AttentionParams {
    pub wq: VarId,
    pub bq: VarId,
    pub wk: VarId,
    pub bk: VarId,
    pub wv: VarId,
    pub bv: VarId,
    pub wo: VarId,
    pub bo: VarId,
}

/// Pre-masked causal multi-head attention. Output shape equals input shape.
pub fn causal_attention(
    tape: &mut Tape,
    x: VarId,
    p: &AttentionParams,
    n_heads: usize,
) -> Result<VarId, NnError> {
    let xs = tape.value(x).shape().to_vec();
    if xs.len() != 3 {
        return Err(NnError::ShapeMismatch(format!(
            "attention expects rank-3 input, got {xs:?}"
        )));
    }
    let (bs, s, d) = (xs[0], xs[1], xs[2]);
    if d % n_heads != 0 {
        return Err(NnError::ShapeMismatch(format!(
            "embedding {d} not divisible by {n_heads} heads"
        )));
    }
    let q = tape.affine(x, p.wq, p.bq);
    let k = tape.affine(x, p.wk, p.bk);
    let v = tape.affine(x, p.wv, p.bv);
    let qh = tape.split_heads(q, bs, s, n_heads);
    let kh = tape.split_heads(k, bs, s, n_heads);
    let vh = tape.split_heads(v, bs, s, n_heads);
    let core = tape.attention_core(qh, kh, vh);
    let merged = tape.merge_heads(core, bs, s, n_heads);
    Ok(tape.affine(merged, p.wo, p.bo))
}

pub struct FeedForwardParams {
    pub w1: VarId,
    pub b1: VarId,
    pub w2: VarId,
    pub b2: VarId,
}

/// Two-layer GELU MLP applied per position.
pub fn feed_forward(tape: &mut Tape, x: VarId, p: &FeedForwardParams) -> VarId {
    assert_eq!(tape.value(x).rank(), 3);
    let h = tape.affine(x, p.w1, p.b1);
    let h = tape.gelu(h);
    tape.affine(h, p.w2, p.b2)
}

/// Two-layer GELU MLP on pooled rows: (B, Din) -> (B, Dout).
pub fn pooled_mlp(tape: &mut Tape, x: VarId, w1: VarId, b1: VarId, w2: VarId, b2: VarId) -> VarId {
    let h = tape.affine(x, w1, b1);
    let h = tape.gelu(h);
    tape.affine(h, w2, b2)
}
