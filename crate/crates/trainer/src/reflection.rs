//! Low-dimensional reflection diagnostics: full-vector (64-dim, no streams)
//! toy operators trained to negate their input, probing which operator
//! families can express y = -x. The Householder family can (beta -> 2, k
//! along x); the Cayley family provably cannot reach eigenvalue -1; the
//! hybrid selects its reflection branch by driving the gate to 0.

use crate::adamw::{adamw_step, clip_gradients, AdamHyper, OptimState};
use crate::metrics::cosine_alignment;
use crate::record::DiagnosticRecord;
use crate::schedule::lr_at;
use crate::TrainerError;
use datasets::{gen_reflection, Dataset};
use nn::tape::{Tape, VarId};
use nn::{Init, ParamBinding, ParamSet, ParamSpec};
use numkit::{RandomStream, Tensor};

pub const TOY_DIM: usize = 64;
const TOY_HIDDEN: usize = 16;
const LOG_EVERY: usize = 50;
/// Alignment threshold for the convergence flag.
const CONVERGED_ALIGNMENT: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ToyKind {
    /// y = (I - beta k(x) k(x)^T) x with a trainable scalar beta (init 1.0)
    /// and a trained direction head.
    DdlToy,
    /// y = gamma(x) Q(x) x + (1 - gamma(x)) H_2(k(x)) x with the gate
    /// biased toward the reflection branch at init.
    HybridToy,
    /// y = Q x for a full-rank trainable skew generator behind the exact
    /// Cayley map (input-independent).
    CayleyToy,
}

impl ToyKind {
    pub fn name(self) -> &'static str {
        match self {
            ToyKind::DdlToy => "ddl_toy",
            ToyKind::HybridToy => "hybrid_toy",
            ToyKind::CayleyToy => "cayley_toy",
        }
    }

    pub fn parse(s: &str) -> Option<ToyKind> {
        match s {
            "ddl_toy" => Some(ToyKind::DdlToy),
            "hybrid_toy" => Some(ToyKind::HybridToy),
            "cayley_toy" => Some(ToyKind::CayleyToy),
            _ => None,
        }
    }
}

fn head_specs(prefix: &str, d_out: usize, out: &mut Vec<ParamSpec>) {
    out.push(ParamSpec::new(
        format!("{prefix}.w1"),
        vec![TOY_DIM, TOY_HIDDEN],
        Init::Gauss(0.02),
    ));
    out.push(ParamSpec::new(format!("{prefix}.b1"), vec![TOY_HIDDEN], Init::Zeros));
    out.push(ParamSpec::new(
        format!("{prefix}.w2"),
        vec![TOY_HIDDEN, d_out],
        Init::Gauss(0.02),
    ));
    out.push(ParamSpec::new(format!("{prefix}.b2"), vec![d_out], Init::Zeros));
}

fn toy_specs(kind: ToyKind) -> Vec<ParamSpec> {
    let mut specs = Vec::new();
    match kind {
        ToyKind::DdlToy => {
            head_specs("k", TOY_DIM, &mut specs);
            specs.push(ParamSpec::new("beta", vec![1], Init::Const(1.0)));
        }
        ToyKind::HybridToy => {
            head_specs("u", TOY_DIM, &mut specs);
            head_specs("v", TOY_DIM, &mut specs);
            head_specs("k", TOY_DIM, &mut specs);
            head_specs("beta", 1, &mut specs);
            specs.push(ParamSpec::new("gate_w", vec![TOY_DIM, 1], Init::Zeros));
            specs.push(ParamSpec::new("gate_b", vec![1], Init::Const(-1.5)));
        }
        ToyKind::CayleyToy => {
            specs.push(ParamSpec::new(
                "lower",
                vec![TOY_DIM * (TOY_DIM - 1) / 2],
                Init::Gauss(0.02),
            ));
        }
    }
    specs
}

fn head(p: &ParamBinding, prefix: &str) -> nn::MlpHead {
    nn::MlpHead {
        w1: p.var(&format!("{prefix}.w1")),
        b1: p.var(&format!("{prefix}.b1")),
        w2: p.var(&format!("{prefix}.w2")),
        b2: p.var(&format!("{prefix}.b2")),
    }
}

/// Build the toy forward graph; returns (prediction, mean gate node).
fn toy_forward(
    kind: ToyKind,
    tape: &mut Tape,
    p: &ParamBinding,
    x: &Tensor,
) -> (VarId, Option<VarId>) {
    let bs = x.shape()[0];
    let x3 = tape.constant(x.clone());
    let flat = tape.reshape(x3, vec![bs, TOY_DIM]);
    match kind {
        ToyKind::DdlToy => {
            let kh = head(p, "k");
            let k_raw = nn::pooled_mlp(tape, flat, kh.w1, kh.b1, kh.w2, kh.b2);
            let k = tape.normalize_rows(k_raw);
            let ones = tape.constant(Tensor::new(vec![bs, 1], vec![1.0; bs]).unwrap());
            let beta_11 = tape.reshape(p.var("beta"), vec![1, 1]);
            let beta_col = tape.matmul(ones, beta_11);
            let beta = tape.reshape(beta_col, vec![bs]);
            let y = tape.householder_apply(x3, k, beta);
            (y, None)
        }
        ToyKind::HybridToy => {
            let gp = nn::GeneratorParams {
                u: head(p, "u"),
                v: head(p, "v"),
                k: head(p, "k"),
                beta: head(p, "beta"),
                gate_w: p.var("gate_w"),
                gate_b: p.var("gate_b"),
            };
            let gens = nn::generators_forward(tape, flat, &gp);
            let q = nn::batched_cayley(tape, gens.u, gens.v, gens.beta);
            let qx = tape.stream_apply(x3, q, TOY_DIM);
            let two = tape.constant(Tensor::new(vec![bs], vec![2.0; bs]).unwrap());
            let hx = tape.householder_apply(x3, gens.k, two);
            let y = tape.gate_blend(gens.gamma, qx, hx);
            (y, Some(gens.gamma))
        }
        ToyKind::CayleyToy => {
            let width = TOY_DIM * (TOY_DIM - 1) / 2;
            let lower = tape.reshape(p.var("lower"), vec![1, width]);
            let skew_b = tape.skew_from_lower(lower, TOY_DIM);
            let skew = tape.reshape(skew_b, vec![TOY_DIM, TOY_DIM]);
            let eye = {
                let mut data = vec![0.0; TOY_DIM * TOY_DIM];
                for i in 0..TOY_DIM {
                    data[i * TOY_DIM + i] = 1.0;
                }
                tape.constant(Tensor::new(vec![TOY_DIM, TOY_DIM], data).unwrap())
            };
            let plus = tape.add(eye, skew);
            let minus = tape.sub(eye, skew);
            let q = tape.solve2(plus, minus);
            let qb = tape.broadcast_batch(q, bs);
            let y = tape.stream_apply(x3, qb, TOY_DIM);
            (y, None)
        }
    }
}

fn eval_toy(kind: ToyKind, params: &ParamSet, ds: &Dataset) -> (f64, Option<f64>) {
    let idx: Vec<usize> = (0..ds.count).collect();
    let (x, y) = ds.gather(&idx);
    let mut tape = Tape::new();
    let binding = params.bind(&mut tape);
    let (pred, gamma) = toy_forward(kind, &mut tape, &binding, &x);
    let (align, _) = cosine_alignment(tape.value(pred), &y);
    let mean_gamma = gamma.map(|g| {
        let t = tape.value(g);
        t.data().iter().sum::<f64>() / t.len() as f64
    });
    (align, mean_gamma)
}

/// Train one diagnostic and report parameter convergence plus alignment.
pub fn reflection_diagnostic(
    kind: ToyKind,
    n_samples: usize,
    seed: u64,
    iters: usize,
) -> Result<DiagnosticRecord, TrainerError> {
    let started = std::time::Instant::now();
    let pair = gen_reflection(seed, n_samples, TOY_DIM);
    let root = RandomStream::new(seed);
    let mut params = ParamSet::from_specs(&toy_specs(kind), &mut root.substream("init"));
    let mut state = OptimState::new(&params, AdamHyper::default());
    let mut shuffle = root.substream("shuffle");
    let batch = 64.min(pair.train.count);
    let mut order: Vec<usize> = (0..pair.train.count).collect();
    shuffle.shuffle(&mut order);
    let mut pos = 0usize;
    let mut trajectory = Vec::new();

    for i in 0..iters {
        if pos + batch > order.len() {
            shuffle.shuffle(&mut order);
            pos = 0;
        }
        let idx = order[pos..pos + batch].to_vec();
        pos += batch;
        let (x, y) = pair.train.gather(&idx);
        let mut tape = Tape::new();
        let binding = params.bind(&mut tape);
        let (pred, _) = toy_forward(kind, &mut tape, &binding, &x);
        let loss = tape.mse_loss(pred, &y);
        let mut grads = tape.backward(loss);
        params.zero_grads();
        params.absorb(&binding, &mut grads);
        drop(tape);
        clip_gradients(&mut params, state.hyper.clip)?;
        adamw_step(&mut params, &mut state, lr_at(i + 1))?;
        let iter = i + 1;
        if iter % LOG_EVERY == 0 || iter == iters {
            let (align, _) = eval_toy(kind, &params, &pair.val);
            trajectory.push((iter, align));
        }
    }

    let (final_alignment, final_gamma) = eval_toy(kind, &params, &pair.val);
    let final_beta = match kind {
        ToyKind::DdlToy => Some(params.get("beta").value.item()),
        _ => None,
    };
    Ok(DiagnosticRecord {
        kind: kind.name().to_string(),
        samples: n_samples,
        seed,
        final_beta,
        final_gamma,
        final_alignment,
        alignment_trajectory: trajectory,
        converged: final_alignment >= CONVERGED_ALIGNMENT,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    })
}
