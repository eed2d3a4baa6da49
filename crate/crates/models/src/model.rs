use crate::config::{ModelConfig, ModelKind};
use crate::registry::{lookup, ForwardOutput};
use crate::ModelError;
use nn::tape::{Tape, VarId};
use nn::{ParamBinding, ParamSet};
use numkit::{RandomStream, Tensor};

/// A built model: config, parameters (with gradient slots), and the seed
/// its initialization was drawn from.
#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamSet,
    pub seed: u64,
}

/// Exact trainable-scalar count, by enumeration of the declared parameter
/// shapes (never a closed form, so it cannot drift from the real layout).
pub fn count_params(config: &ModelConfig) -> Result<u64, ModelError> {
    config.validate()?;
    Ok(lookup(config.kind)
        .param_specs(config)
        .iter()
        .map(|s| s.num_scalars() as u64)
        .sum())
}

/// Deterministically initialize a model from a stream.
pub fn build_model(config: &ModelConfig, init_stream: &mut RandomStream) -> Result<Model, ModelError> {
    config.validate()?;
    let specs = lookup(config.kind).param_specs(config);
    let params = ParamSet::from_specs(&specs, init_stream);
    Ok(Model {
        config: config.clone(),
        params,
        seed: init_stream.seed(),
    })
}

/// One bound forward pass over a tape the caller owns.
pub struct ModelForward {
    pub output: VarId,
    pub gammas: Vec<VarId>,
    pub binding: ParamBinding,
}

impl Model {
    /// Build the forward graph for a batch; `input` is (B, seq_len, task_dim).
    pub fn forward(&self, tape: &mut Tape, input: &Tensor) -> ModelForward {
        assert_eq!(
            input.shape()[1..],
            [self.config.seq_len, self.config.task_dim],
            "input geometry must match the config"
        );
        let binding = self.params.bind(tape);
        let x = tape.constant(input.clone());
        let ForwardOutput { output, gammas } =
            lookup(self.config.kind).forward(&self.config, tape, &binding, x);
        ModelForward {
            output,
            gammas,
            binding,
        }
    }

    /// Forward pass returning plain tensors (predictions, per-site mean gates).
    pub fn predict(&self, input: &Tensor) -> (Tensor, Vec<f64>) {
        let mut tape = Tape::new();
        let fwd = self.forward(&mut tape, input);
        let gammas = fwd
            .gammas
            .iter()
            .map(|&g| {
                let t = tape.value(g);
                t.data().iter().sum::<f64>() / t.len() as f64
            })
            .collect();
        (tape.value(fwd.output).clone(), gammas)
    }

    pub fn kind(&self) -> ModelKind {
        self.config.kind
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(kind: ModelKind) -> ModelConfig {
        let mut cfg = ModelConfig::matched(kind, 6, 5);
        cfg.n_layers = 2;
        cfg.n_embd = if kind == ModelKind::Jpmhc { 16 } else { 8 };
        cfg.n_heads = 2;
        cfg
    }

    #[test]
    fn build_and_count_agree() {
        for kind in ModelKind::ALL {
            let cfg = tiny(kind);
            let mut stream = RandomStream::new(1);
            let model = build_model(&cfg, &mut stream).unwrap();
            assert_eq!(
                model.params.num_scalars() as u64,
                count_params(&cfg).unwrap(),
                "{kind}"
            );
        }
    }

    #[test]
    fn forward_is_deterministic_and_shape_stable() {
        let mut input_stream = RandomStream::new(9);
        for kind in ModelKind::ALL {
            let cfg = tiny(kind);
            let input = Tensor::new(
                vec![3, cfg.seq_len, cfg.task_dim],
                input_stream.gauss_vec(3 * cfg.seq_len * cfg.task_dim, 1.0),
            )
            .unwrap();
            let m1 = build_model(&cfg, &mut RandomStream::new(5)).unwrap();
            let m2 = build_model(&cfg, &mut RandomStream::new(5)).unwrap();
            let (y1, g1) = m1.predict(&input);
            let (y2, g2) = m2.predict(&input);
            assert_eq!(y1, y2, "{kind} forward not deterministic");
            assert_eq!(g1, g2);
            assert_eq!(y1.shape(), input.shape(), "{kind} output shape");
        }
    }

    #[test]
    fn gamma_log_has_two_entries_per_layer() {
        let cfg = tiny(ModelKind::Edelta);
        let model = build_model(&cfg, &mut RandomStream::new(2)).unwrap();
        let input = Tensor::zeros(vec![2, cfg.seq_len, cfg.task_dim]);
        let (_, gammas) = model.predict(&input);
        assert_eq!(gammas.len(), 2 * cfg.n_layers);
        for kind in [ModelKind::Gpt, ModelKind::Ddl, ModelKind::Mhc, ModelKind::Jpmhc] {
            let cfg = tiny(kind);
            let model = build_model(&cfg, &mut RandomStream::new(2)).unwrap();
            let input = Tensor::zeros(vec![2, cfg.seq_len, cfg.task_dim]);
            let (_, gammas) = model.predict(&input);
            assert!(gammas.is_empty());
        }
    }

    #[test]
    fn zero_layer_config_is_rejected() {
        let mut cfg = tiny(ModelKind::Gpt);
        cfg.n_layers = 0;
        assert!(build_model(&cfg, &mut RandomStream::new(0)).is_err());
    }
}
