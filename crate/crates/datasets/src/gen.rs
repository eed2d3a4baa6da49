use crate::{Dataset, DatasetPair};
use geometry::{cayley_map, rotation_plane};
use numkit::{Matrix, RandomStream, Tensor};

/// Largest planar rotation angle for gyroscope generators, radians.
const GYRO_MAX_ANGLE: f64 = 0.3;

/// Roll a trajectory x_{t+1} = R x_t; inputs are x_0..x_{T-1}, targets
/// x_1..x_T.
fn rotation_trajectory(
    r: &Matrix,
    x0: Vec<f64>,
    seq_len: usize,
    inputs: &mut Vec<f64>,
    targets: &mut Vec<f64>,
) {
    let mut x = x0;
    for _ in 0..seq_len {
        inputs.extend_from_slice(&x);
        x = r.matvec(&x);
        targets.extend_from_slice(&x);
    }
}

/// Spectral norm of a skew matrix by power iteration on -S^2 (deterministic
/// start vector).
fn skew_spectral_norm(s: &Matrix) -> f64 {
    let n = s.rows();
    let mut v = vec![0.0; n];
    v[0] = 1.0;
    if n > 1 {
        v[1] = 0.5;
    }
    let mut lambda: f64 = 0.0;
    for _ in 0..60 {
        // w = S^T S v = -S^2 v for skew S.
        let sv = s.matvec(&v);
        let w = s.transpose().matvec(&sv);
        lambda = w.iter().map(|x| x * x).sum::<f64>().sqrt().sqrt();
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-30 {
            return 0.0;
        }
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / norm;
        }
    }
    lambda
}

fn random_skew(d: usize, stream: &mut RandomStream) -> Matrix {
    let mut s = Matrix::zeros(d, d);
    for i in 0..d {
        for j in i + 1..d {
            let v = stream.next_gauss();
            s.set(i, j, v);
            s.set(j, i, -v);
        }
    }
    s
}

/// Per-sequence rotation trajectories: sample a skew generator, scale it so
/// the largest planar Cayley angle is GYRO_MAX_ANGLE, take the exact Cayley
/// map, and roll a unit starting vector.
pub fn gen_gyroscope(
    seed: u64,
    n_train: usize,
    n_val: usize,
    d: usize,
    seq_len: usize,
) -> DatasetPair {
    assert!(d % 2 == 0, "gyroscope needs an even dimension");
    let root = RandomStream::new(seed);
    let make = |name: &str, count: usize, stream: &mut RandomStream| -> Dataset {
        let mut inputs = Vec::with_capacity(count * seq_len * d);
        let mut targets = Vec::with_capacity(count * seq_len * d);
        for _ in 0..count {
            let raw = random_skew(d, stream);
            let sigma = skew_spectral_norm(&raw);
            // Cayley angle of a planar sigma is 2*atan(sigma): scale so the
            // largest angle lands exactly at the cap.
            let r = if sigma < 1e-12 {
                Matrix::identity(d)
            } else {
                let scale = (GYRO_MAX_ANGLE / 2.0).tan() / sigma;
                cayley_map(&raw.scale(scale))
            };
            let x0 = stream.unit_vec(d);
            rotation_trajectory(&r, x0, seq_len, &mut inputs, &mut targets);
        }
        Dataset::new(
            name,
            d,
            seq_len,
            Tensor::new(vec![count, seq_len, d], inputs).unwrap(),
            Tensor::new(vec![count, seq_len, d], targets).unwrap(),
            seed,
        )
    };
    DatasetPair {
        train: make("gyroscope-train", n_train, &mut root.substream("train")),
        val: make("gyroscope-val", n_val, &mut root.substream("val")),
    }
}

/// Long-horizon echo: the input is a unit vector at position 0 and zero
/// afterwards; the target repeats that vector at every position.
pub fn gen_stability(
    seed: u64,
    n_train: usize,
    n_val: usize,
    d: usize,
    seq_len: usize,
) -> DatasetPair {
    let root = RandomStream::new(seed);
    let make = |name: &str, count: usize, stream: &mut RandomStream| -> Dataset {
        let mut inputs = vec![0.0; count * seq_len * d];
        let mut targets = Vec::with_capacity(count * seq_len * d);
        for i in 0..count {
            let x0 = stream.unit_vec(d);
            inputs[i * seq_len * d..i * seq_len * d + d].copy_from_slice(&x0);
            for _ in 0..seq_len {
                targets.extend_from_slice(&x0);
            }
        }
        Dataset::new(
            name,
            d,
            seq_len,
            Tensor::new(vec![count, seq_len, d], inputs).unwrap(),
            Tensor::new(vec![count, seq_len, d], targets).unwrap(),
            seed,
        )
    };
    DatasetPair {
        train: make("stability-train", n_train, &mut root.substream("train")),
        val: make("stability-val", n_val, &mut root.substream("val")),
    }
}

/// Pure negation probe: unit-vector inputs of sequence length 1 with
/// targets -x. Validation is a fixed 500-sample set.
pub fn gen_reflection(seed: u64, n_train: usize, d: usize) -> DatasetPair {
    let root = RandomStream::new(seed);
    let make = |name: &str, count: usize, stream: &mut RandomStream| -> Dataset {
        let mut inputs = Vec::with_capacity(count * d);
        for _ in 0..count {
            inputs.extend_from_slice(&stream.unit_vec(d));
        }
        let targets: Vec<f64> = inputs.iter().map(|v| -v).collect();
        Dataset::new(
            name,
            d,
            1,
            Tensor::new(vec![count, 1, d], inputs).unwrap(),
            Tensor::new(vec![count, 1, d], targets).unwrap(),
            seed,
        )
    };
    DatasetPair {
        train: make("reflection-train", n_train, &mut root.substream("train")),
        val: make("reflection-val", 500, &mut root.substream("val")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NearPiKind {
    /// One plane rotated by 3.10 rad; identity elsewhere.
    Single,
    /// Every plane rotated by 3.14 rad.
    Multi,
}

impl NearPiKind {
    pub fn dataset_name(self) -> &'static str {
        match self {
            NearPiKind::Single => "near-pi-single",
            NearPiKind::Multi => "near-pi-multi",
        }
    }
}

/// Build the fixed near-pi rotation for a dimension.
pub fn near_pi_rotation(kind: NearPiKind, d: usize) -> Matrix {
    assert!(d % 2 == 0, "near-pi needs an even dimension");
    match kind {
        NearPiKind::Single => rotation_plane(d, 0, 1, 3.10).unwrap(),
        NearPiKind::Multi => {
            let mut r = Matrix::identity(d);
            for p in 0..d / 2 {
                let plane = rotation_plane(d, 2 * p, 2 * p + 1, 3.14).unwrap();
                r = plane.matmul(&r);
            }
            r
        }
    }
}

/// Trajectories of one fixed near-pi rotation shared by every sequence;
/// only the starting vectors vary.
pub fn gen_near_pi(
    kind: NearPiKind,
    seed: u64,
    n_train: usize,
    n_val: usize,
    d: usize,
    seq_len: usize,
) -> DatasetPair {
    let r = near_pi_rotation(kind, d);
    let root = RandomStream::new(seed);
    let base = kind.dataset_name();
    let make = |name: String, count: usize, stream: &mut RandomStream| -> Dataset {
        let mut inputs = Vec::with_capacity(count * seq_len * d);
        let mut targets = Vec::with_capacity(count * seq_len * d);
        for _ in 0..count {
            let x0 = stream.unit_vec(d);
            rotation_trajectory(&r, x0, seq_len, &mut inputs, &mut targets);
        }
        Dataset::new(
            name,
            d,
            seq_len,
            Tensor::new(vec![count, seq_len, d], inputs).unwrap(),
            Tensor::new(vec![count, seq_len, d], targets).unwrap(),
            seed,
        )
    };
    DatasetPair {
        train: make(format!("{base}-train"), n_train, &mut root.substream("train")),
        val: make(format!("{base}-val"), n_val, &mut root.substream("val")),
    }
}
