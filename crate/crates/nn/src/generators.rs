//! Generator heads: from pooled features to the operator bundle
//! (u, v, beta, k, gamma), plus the batched Cayley and Householder
//! stream operators they feed.

use crate::layers::pooled_mlp;
use crate::tape::{Tape, VarId};
use numkit::Tensor;

/// Leaf ids for one generator-head site.
pub struct GeneratorParams {
    pub u: MlpHead,
    pub v: MlpHead,
    pub k: MlpHead,
    pub beta: MlpHead,
    pub gate_w: VarId,
    pub gate_b: VarId,
}

pub struct MlpHead {
    pub w1: VarId,
    pub b1: VarId,
    pub w2: VarId,
    pub b2: VarId,
}

/// Batched generator outputs for one forward pass.
pub struct GeneratorVars {
    /// (B, n)
    pub u: VarId,
    /// (B, n)
    pub v: VarId,
    /// (B,), strictly positive (softplus head)
    pub beta: VarId,
    /// (B, n), unit rows
    pub k: VarId,
    /// (B,), strictly inside (0, 1) (sigmoid gate)
    pub gamma: VarId,
}

/// Run all five heads on pooled input (B, D).
pub fn generators_forward(tape: &mut Tape, pooled: VarId, p: &GeneratorParams) -> GeneratorVars {
    let bs = tape.value(pooled).shape()[0];
    let u = pooled_mlp(tape, pooled, p.u.w1, p.u.b1, p.u.w2, p.u.b2);
    let v = pooled_mlp(tape, pooled, p.v.w1, p.v.b1, p.v.w2, p.v.b2);
    let k_raw = pooled_mlp(tape, pooled, p.k.w1, p.k.b1, p.k.w2, p.k.b2);
    let k = tape.normalize_rows(k_raw);
    let beta_raw = pooled_mlp(tape, pooled, p.beta.w1, p.beta.b1, p.beta.w2, p.beta.b2);
    let beta_col = tape.softplus(beta_raw);
    let beta = tape.reshape(beta_col, vec![bs]);
    let g_lin = tape.matmul(pooled, p.gate_w);
    let g_lin = tape.add_row_bias(g_lin, p.gate_b);
    let g_sig = tape.sigmoid(g_lin);
    let gamma = tape.reshape(g_sig, vec![bs]);
    GeneratorVars { u, v, beta, k, gamma }
}

/// Batched data-dependent Cayley rotation (B, n, n) from generator vectors:
/// `Q = (I + (beta/2) A)^{-1} (I - (beta/2) A)` with `A = u v^T - v u^T`.
pub fn batched_cayley(tape: &mut Tape, u: VarId, v: VarId, beta: VarId) -> VarId {
    let bs = tape.value(u).shape()[0];
    let n = tape.value(u).shape()[1];
    let uv = tape.batch_outer(u, v);
    let vu = tape.batch_outer(v, u);
    let skew = tape.sub(uv, vu);
    let half_beta = tape.scale(beta, 0.5);
    let m = tape.batch_scale(skew, half_beta);
    let eye = tape.eye_batch(bs, n);
    let plus = tape.add(eye, m);
    let minus = tape.sub(eye, m);
    tape.batch_solve(plus, minus)
}

/// Batched Householder matrices (B, n, n): `H = I - beta k k^T`.
pub fn batched_householder(tape: &mut Tape, k: VarId, beta: f64) -> VarId {
    let bs = tape.value(k).shape()[0];
    let n = tape.value(k).shape()[1];
    let kk = tape.batch_outer(k, k);
    let scaled = tape.scale(kk, beta);
    let eye = tape.eye_batch(bs, n);
    tape.sub(eye, scaled)
}

/// Plain (validated) value bundle extracted from a forward pass, one batch row.
#[derive(Debug, Clone)]
pub struct GeneratorOutputs {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub beta: f64,
    pub k: Vec<f64>,
    pub gamma: f64,
}

impl GeneratorOutputs {
    pub fn from_vars(tape: &Tape, vars: &GeneratorVars, row: usize) -> Self {
        let pick = |t: &Tensor, r: usize| -> Vec<f64> {
            let n = t.shape()[1];
            t.data()[r * n..(r + 1) * n].to_vec()
        };
        GeneratorOutputs {
            u: pick(tape.value(vars.u), row),
            v: pick(tape.value(vars.v), row),
            beta: tape.value(vars.beta).data()[row],
            k: pick(tape.value(vars.k), row),
            gamma: tape.value(vars.gamma).data()[row],
        }
    }
}
