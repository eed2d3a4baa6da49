//! Central finite-difference checks against the tape's analytic gradients.

use crate::params::ParamSet;
use crate::tape::{Tape, VarId};
use numkit::Tensor;

pub const DEFAULT_STEP: f64 = 1e-5;

/// |a - b| relative to the larger magnitude, floored so that two
/// numerically-zero gradients compare equal.
pub fn relative_error(a: f64, b: f64) -> f64 {
    let denom = a.abs().max(b.abs()).max(1e-8);
    (a - b).abs() / denom
}

/// Build a scalar graph from leaf tensors, then compare every analytic
/// input gradient against central differences. Returns the worst relative
/// error over all input elements.
pub fn check_input_gradients(
    inputs: &[Tensor],
    step: f64,
    build: impl Fn(&mut Tape, &[VarId]) -> VarId,
) -> f64 {
    let eval = |inputs: &[Tensor]| -> f64 {
        let mut tape = Tape::new();
        let ids: Vec<VarId> = inputs.iter().map(|t| tape.leaf(t.clone(), true)).collect();
        let out = build(&mut tape, &ids);
        tape.value(out).item()
    };

    let mut tape = Tape::new();
    let ids: Vec<VarId> = inputs.iter().map(|t| tape.leaf(t.clone(), true)).collect();
    let out = build(&mut tape, &ids);
    let grads = tape.backward(out);

    let mut worst = 0.0f64;
    let mut work: Vec<Tensor> = inputs.to_vec();
    for (i, input) in inputs.iter().enumerate() {
        let analytic = grads
            .get(ids[i])
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(input.shape().to_vec()));
        for e in 0..input.len() {
            let x0 = input.data()[e];
            work[i].data_mut()[e] = x0 + step;
            let plus = eval(&work);
            work[i].data_mut()[e] = x0 - step;
            let minus = eval(&work);
            work[i].data_mut()[e] = x0;
            let fd = (plus - minus) / (2.0 * step);
            worst = worst.max(relative_error(analytic.data()[e], fd));
        }
    }
    worst
}

/// Same comparison over every scalar of a parameter set. `build_loss` must
/// be a pure function of the bound parameters.
pub fn check_param_gradients(
    params: &ParamSet,
    step: f64,
    build_loss: impl Fn(&mut Tape, &crate::params::ParamBinding) -> VarId,
) -> f64 {
    let eval = |p: &ParamSet| -> f64 {
        let mut tape = Tape::new();
        let binding = p.bind(&mut tape);
        let out = build_loss(&mut tape, &binding);
        tape.value(out).item()
    };

    let mut tape = Tape::new();
    let binding = params.bind(&mut tape);
    let out = build_loss(&mut tape, &binding);
    let mut grads = tape.backward(out);
    let mut analytic = ParamSet::clone(params);
    analytic.zero_grads();
    analytic.absorb(&binding, &mut grads);

    let mut work = ParamSet::clone(params);
    let mut worst = 0.0f64;
    for i in 0..params.len() {
        for e in 0..params.entries()[i].value.len() {
            let x0 = params.entries()[i].value.data()[e];
            work.entries_mut()[i].value.data_mut()[e] = x0 + step;
            let plus = eval(&work);
            work.entries_mut()[i].value.data_mut()[e] = x0 - step;
            let minus = eval(&work);
            work.entries_mut()[i].value.data_mut()[e] = x0;
            let fd = (plus - minus) / (2.0 * step);
            let an = analytic.entries()[i].grad.data()[e];
            worst = worst.max(relative_error(an, fd));
        }
    }
    worst
}
