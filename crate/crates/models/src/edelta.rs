//! The gated hybrid architecture: each block applies the geometric operator
//! twice (before attention and before the MLP). One site computes, from the
//! pooled block input, a Cayley rotation branch and a Householder reflection
//! branch on the stream axis, blends them with a learned sigmoid gate, and
//! adds a compute path wrapped by identity-initialized full-dimensional
//! pre/post projections:
//!
//! ```text
//! X_geo  = gamma * Q(X) X + (1 - gamma) * H_2(k(X)) X
//! X_next = X_geo + H_post^T F(H_pre LN(X_geo))
//! ```

use crate::common::{self, embed_input, output_head};
use crate::config::{ModelConfig, ModelKind};
use crate::registry::{Architecture, ForwardOutput};
use nn::tape::{Tape, VarId};
use nn::{Init, ParamBinding, ParamSpec};

pub struct Edelta;

fn site_specs(prefix: &str, cfg: &ModelConfig, out: &mut Vec<ParamSpec>) {
    let d = cfg.n_embd;
    let n = cfg.n_streams.unwrap_or(4);
    common::generator_specs(&format!("{prefix}.gen"), cfg, n, out);
    out.push(ParamSpec::new(format!("{prefix}.pre"), vec![d, d], Init::Identity));
    out.push(ParamSpec::new(format!("{prefix}.post"), vec![d, d], Init::Identity));
    common::norm_specs(&format!("{prefix}.ln"), d, out);
}

enum SiteKind {
    Attention,
    FeedForward,
}

/// One geometric-operator site. Returns the next activations and the gate
/// node for this site.
fn site_forward(
    cfg: &ModelConfig,
    tape: &mut Tape,
    p: &ParamBinding,
    site_prefix: &str,
    f_prefix: &str,
    kind: SiteKind,
    x: VarId,
) -> (VarId, VarId) {
    let n = cfg.n_streams.expect("validated");
    // Pooling sees the raw site input; the norm is applied after the
    // geometric operator, on the compute path only.
    let pooled = nn::mean_pool(tape, x).expect("non-empty sequence");
    let gens = nn::generators_forward(tape, pooled, &common::generator_params(p, &format!("{site_prefix}.gen")));
    let q = nn::batched_cayley(tape, gens.u, gens.v, gens.beta);
    let q_path = tape.stream_apply(x, q, n);
    let h = nn::batched_householder(tape, gens.k, cfg.householder_beta);
    let h_path = tape.stream_apply(x, h, n);
    let x_geo = tape.gate_blend(gens.gamma, q_path, h_path);

    let ln = tape.layer_norm(
        x_geo,
        p.var(&format!("{site_prefix}.ln.g")),
        p.var(&format!("{site_prefix}.ln.b")),
    );
    let f_in = nn::project_3d(tape, ln, p.var(&format!("{site_prefix}.pre")));
    let f = match kind {
        SiteKind::Attention => nn::causal_attention(
            tape,
            f_in,
            &common::attention_params(p, f_prefix),
            cfg.n_heads,
        )
        .expect("validated shapes"),
        SiteKind::FeedForward => {
            nn::feed_forward(tape, f_in, &common::ffn_params(p, f_prefix))
        }
    };
    let f_out = nn::linear_3d(tape, f, p.var(&format!("{site_prefix}.post")), None);
    (tape.add(x_geo, f_out), gens.gamma)
}

/// Full hybrid block: attention site then feed-forward site. Returns the
/// next activations and both site gates in order.
pub fn block_forward(
    cfg: &ModelConfig,
    tape: &mut Tape,
    p: &ParamBinding,
    block: usize,
    x: VarId,
) -> (VarId, Vec<VarId>) {
    let prefix = format!("block{block}");
    let (x, g1) = site_forward(
        cfg,
        tape,
        p,
        &format!("{prefix}.attn_site"),
        &format!("{prefix}.attn"),
        SiteKind::Attention,
        x,
    );
    let (x, g2) = site_forward(
        cfg,
        tape,
        p,
        &format!("{prefix}.ffn_site"),
        &format!("{prefix}.ffn"),
        SiteKind::FeedForward,
        x,
    );
    (x, vec![g1, g2])
}

impl Architecture for Edelta {
    fn kind(&self) -> ModelKind {
        ModelKind::Edelta
    }

    fn param_specs(&self, cfg: &ModelConfig) -> Vec<ParamSpec> {
        let mut specs = Vec::new();
        common::embedding_specs(cfg, &mut specs);
        for i in 0..cfg.n_layers {
            let prefix = format!("block{i}");
            site_specs(&format!("{prefix}.attn_site"), cfg, &mut specs);
            common::attention_specs(&format!("{prefix}.attn"), cfg.n_embd, &mut specs);
            site_specs(&format!("{prefix}.ffn_site"), cfg, &mut specs);
            common::ffn_specs(&format!("{prefix}.ffn"), cfg.n_embd, &mut specs);
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
        let mut gammas = Vec::with_capacity(2 * cfg.n_layers);
        for i in 0..cfg.n_layers {
            let (next, gs) = block_forward(cfg, tape, p, i, x);
            x = next;
            gammas.extend(gs);
        }
        ForwardOutput {
            output: output_head(tape, p, x),
            gammas,
        }
    }
}
