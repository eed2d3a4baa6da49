use crate::TrainerError;
use nn::ParamSet;
use numkit::Tensor;

/// Optimizer hyperparameters (decoupled weight decay).
#[derive(Debug, Clone, Copy)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub clip: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.95,
            eps: 1e-8,
            weight_decay: 0.1,
            clip: 1.0,
        }
    }
}

/// Per-parameter moment accumulators plus the step counter.
#[derive(Debug, Clone)]
pub struct OptimState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub step: u64,
    pub hyper: AdamHyper,
}

impl OptimState {
    pub fn new(params: &ParamSet, hyper: AdamHyper) -> Self {
        let m = params
            .entries()
            .iter()
            .map(|e| Tensor::zeros(e.value.shape().to_vec()))
            .collect::<Vec<_>>();
        let v = m.clone();
        Self {
            m,
            v,
            step: 0,
            hyper,
        }
    }
}

/// Scale all gradients so the global norm is at most `max_norm`.
/// Returns the pre-clip norm; fails if it is not finite.
pub fn clip_gradients(params: &mut ParamSet, max_norm: f64) -> Result<f64, TrainerError> {
    let mut sq = 0.0;
    for e in params.entries() {
        for g in e.grad.data() {
            sq += g * g;
        }
    }
    let norm = sq.sqrt();
    if !norm.is_finite() {
        return Err(TrainerError::NonFiniteGradient);
    }
    if norm > max_norm {
        let scale = max_norm / norm;
        for e in params.entries_mut() {
            for g in e.grad.data_mut() {
                *g *= scale;
            }
        }
    }
    Ok(norm)
}

/// One decoupled-weight-decay update with bias-corrected moments:
///
/// ```text
/// m <- b1 m + (1-b1) g        v <- b2 v + (1-b2) g^2
/// p <- p - lr * m_hat / (sqrt(v_hat) + eps) - lr * wd * p
/// ```
pub fn adamw_step(
    params: &mut ParamSet,
    state: &mut OptimState,
    lr: f64,
) -> Result<(), TrainerError> {
    state.step += 1;
    let h = state.hyper;
    let bc1 = 1.0 - h.beta1.powi(state.step as i32);
    let bc2 = 1.0 - h.beta2.powi(state.step as i32);
    for (i, e) in params.entries_mut().iter_mut().enumerate() {
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        let p = e.value.data_mut();
        for j in 0..p.len() {
            let g = e.grad.data()[j];
            if !g.is_finite() {
                return Err(TrainerError::NonFiniteGradient);
            }
            m[j] = h.beta1 * m[j] + (1.0 - h.beta1) * g;
            v[j] = h.beta2 * v[j] + (1.0 - h.beta2) * g * g;
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            p[j] -= lr * m_hat / (v_hat.sqrt() + h.eps) + lr * h.weight_decay * p[j];
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_param(value: f64) -> ParamSet {
        let mut p = ParamSet::new();
        p.push("w", Tensor::scalar(value));
        p
    }

    #[test]
    fn zero_gradient_zero_decay_leaves_parameters() {
        let mut params = one_param(1.25);
        let hyper = AdamHyper {
            weight_decay: 0.0,
            ..AdamHyper::default()
        };
        let mut state = OptimState::new(&params, hyper);
        adamw_step(&mut params, &mut state, 1e-3).unwrap();
        assert_eq!(params.get("w").value.item(), 1.25);
    }

    #[test]
    fn clip_rescales_to_unit_norm() {
        let mut params = ParamSet::new();
        params.push("a", Tensor::new(vec![2], vec![0.0, 0.0]).unwrap());
        params.get_mut("a").grad.data_mut()[0] = 1.2;
        params.get_mut("a").grad.data_mut()[1] = 1.6;
        let pre = clip_gradients(&mut params, 1.0).unwrap();
        assert!((pre - 2.0).abs() < 1e-12);
        let g = &params.get("a").grad;
        let post = (g.data()[0].powi(2) + g.data()[1].powi(2)).sqrt();
        assert!((post - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn non_finite_gradient_is_an_error() {
        let mut params = one_param(0.0);
        params.get_mut("w").grad.data_mut()[0] = f64::NAN;
        assert!(matches!(
            clip_gradients(&mut params, 1.0),
            Err(TrainerError::NonFiniteGradient)
        ));
    }

    #[test]
    fn three_steps_match_hand_computed_reference() {
        // One scalar parameter, gradients (1.0, -0.5, 0.25), lr 0.1,
        // beta1 0.9, beta2 0.95, eps 1e-8, weight decay 0.1. The expected
        // values below follow the published update equations by hand.
        let hyper = AdamHyper::default();
        let mut params = one_param(1.0);
        let mut state = OptimState::new(&params, hyper);
        let grads = [1.0, -0.5, 0.25];
        let lr = 0.1;

        // Independent reference computation.
        let (mut m, mut v, mut p) = (0.0f64, 0.0f64, 1.0f64);
        let mut expected = Vec::new();
        for (t, g) in grads.iter().enumerate() {
            m = hyper.beta1 * m + (1.0 - hyper.beta1) * g;
            v = hyper.beta2 * v + (1.0 - hyper.beta2) * g * g;
            let m_hat = m / (1.0 - hyper.beta1.powi(t as i32 + 1));
            let v_hat = v / (1.0 - hyper.beta2.powi(t as i32 + 1));
            p -= lr * m_hat / (v_hat.sqrt() + hyper.eps) + lr * hyper.weight_decay * p;
            expected.push(p);
        }

        for (t, g) in grads.iter().enumerate() {
            params.get_mut("w").grad.data_mut()[0] = *g;
            adamw_step(&mut params, &mut state, lr).unwrap();
            let got = params.get("w").value.item();
            assert!(
                (got - expected[t]).abs() < 1e-15,
                "step {t}: {got} vs {}",
                expected[t]
            );
        }
    }
}
