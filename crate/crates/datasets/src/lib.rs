//! Deterministic synthetic benchmark generators and the on-disk dataset
//! container. Four task families:
//!
//! - gyroscope: per-sequence random rotation applied step by step, targets
//!   one step ahead (manifold precision);
//! - stability: unit impulse at position 0, constant echo target over a
//!   long horizon (norm propagation);
//! - reflection: single positions with pure negation targets;
//! - near-pi: trajectories of one fixed rotation with angle(s) close to pi,
//!   single-plane (3.10 rad) or all planes (3.14 rad).
//!
//! Train and validation splits always come from disjoint named substreams
//! of the seed, so regenerating a file with the same seed is byte-exact and
//! splits cannot leak into each other.

mod format;
mod gen;

pub use format::{read_dataset, write_dataset};
pub use gen::{
    gen_gyroscope, gen_near_pi, gen_reflection, gen_stability, near_pi_rotation, NearPiKind,
};

use numkit::Tensor;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("format error: {0}")]
    Format(String),

    #[error("truncated file: {0}")]
    Truncated(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// One split of one task: inputs and targets are (N, T, d).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub task_dim: usize,
    pub seq_len: usize,
    pub count: usize,
    pub inputs: Tensor,
    pub targets: Tensor,
    pub seed: u64,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        task_dim: usize,
        seq_len: usize,
        inputs: Tensor,
        targets: Tensor,
        seed: u64,
    ) -> Self {
        let count = inputs.shape()[0];
        assert_eq!(inputs.shape(), &[count, seq_len, task_dim]);
        assert_eq!(targets.shape(), &[count, seq_len, task_dim]);
        assert!(inputs.all_finite() && targets.all_finite());
        Self {
            name: name.into(),
            task_dim,
            seq_len,
            count,
            inputs,
            targets,
            seed,
        }
    }

    /// Copy one example's inputs as a (1, T, d) tensor.
    pub fn input_row(&self, i: usize) -> Tensor {
        let per = self.seq_len * self.task_dim;
        Tensor::new(
            vec![1, self.seq_len, self.task_dim],
            self.inputs.data()[i * per..(i + 1) * per].to_vec(),
        )
        .unwrap()
    }

    /// Gather a batch of examples by index.
    pub fn gather(&self, idx: &[usize]) -> (Tensor, Tensor) {
        let per = self.seq_len * self.task_dim;
        let mut xs = Vec::with_capacity(idx.len() * per);
        let mut ys = Vec::with_capacity(idx.len() * per);
        for &i in idx {
            xs.extend_from_slice(&self.inputs.data()[i * per..(i + 1) * per]);
            ys.extend_from_slice(&self.targets.data()[i * per..(i + 1) * per]);
        }
        (
            Tensor::new(vec![idx.len(), self.seq_len, self.task_dim], xs).unwrap(),
            Tensor::new(vec![idx.len(), self.seq_len, self.task_dim], ys).unwrap(),
        )
    }
}

/// Train/validation pair drawn from disjoint substreams.
#[derive(Debug, Clone)]
pub struct DatasetPair {
    pub train: Dataset,
    pub val: Dataset,
}

/// Canonical dataset names accepted by the CLI.
pub const DATASET_NAMES: [&str; 5] = [
    "gyroscope",
    "stability",
    "reflection",
    "near-pi-single",
    "near-pi-multi",
];

/// Generate a dataset family by name with its benchmark-default sizes.
pub fn generate_by_name(name: &str, seed: u64) -> Result<DatasetPair, DatasetError> {
    match name {
        "gyroscope" => Ok(gen_gyroscope(seed, 9000, 1000, 16, 255)),
        "stability" => Ok(gen_stability(seed, 900, 100, 64, 127)),
        "reflection" => Ok(gen_reflection(seed, 500, 64)),
        "near-pi-single" => Ok(gen_near_pi(NearPiKind::Single, seed, 800, 200, 64, 127)),
        "near-pi-multi" => Ok(gen_near_pi(NearPiKind::Multi, seed, 800, 200, 64, 127)),
        other => Err(DatasetError::InvalidInput(format!(
            "unknown dataset {other}; expected one of {DATASET_NAMES:?}"
        ))),
    }
}
