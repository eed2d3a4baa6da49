use nn::tape::Tape;
use nn::{
    batched_cayley, batched_householder, generators_forward, mean_pool, GeneratorOutputs,
    GeneratorParams, MlpHead, NnError,
};
use numkit::{RandomStream, Tensor};

fn rand_t(shape: Vec<usize>, std: f64, s: &mut RandomStream) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, s.gauss_vec(n, std)).unwrap()
}

#[test]
fn mean_pool_examples() {
    let mut tape = Tape::new();
    let ones = tape.constant(Tensor::new(vec![1, 3, 2], vec![1.0; 6]).unwrap());
    let pooled = mean_pool(&mut tape, ones).unwrap();
    assert_eq!(tape.value(pooled).data(), &[1.0, 1.0]);

    let single = tape.constant(Tensor::new(vec![1, 1, 3], vec![4.0, -2.0, 0.5]).unwrap());
    let pooled = mean_pool(&mut tape, single).unwrap();
    assert_eq!(tape.value(pooled).data(), &[4.0, -2.0, 0.5]);

    // Permutation of the sequence pools to the same vector.
    let a = tape.constant(Tensor::new(vec![1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
    let b = tape.constant(Tensor::new(vec![1, 2, 2], vec![3.0, 4.0, 1.0, 2.0]).unwrap());
    let pa = mean_pool(&mut tape, a).unwrap();
    let pb = mean_pool(&mut tape, b).unwrap();
    assert_eq!(tape.value(pa).data(), tape.value(pb).data());

    let empty = tape.constant(Tensor::zeros(vec![1, 0, 2]));
    assert_eq!(mean_pool(&mut tape, empty), Err(NnError::EmptySequence));
}

#[test]
fn attention_is_causal_and_shape_stable() {
    let mut s = RandomStream::new(77);
    let (b, seq, d, heads) = (2, 7, 8, 2);
    let base = rand_t(vec![b, seq, d], 1.0, &mut s);
    let mk = |st: &mut RandomStream| rand_t(vec![d, d], 0.3, st);
    let weights: Vec<Tensor> = (0..4).map(|_| mk(&mut s)).collect();
    let biases: Vec<Tensor> = (0..4).map(|_| rand_t(vec![d], 0.1, &mut s)).collect();

    let run = |x: &Tensor| -> Tensor {
        let mut tape = Tape::new();
        let xid = tape.constant(x.clone());
        let p = nn::AttentionParams {
            wq: tape.constant(weights[0].clone()),
            bq: tape.constant(biases[0].clone()),
            wk: tape.constant(weights[1].clone()),
            bk: tape.constant(biases[1].clone()),
            wv: tape.constant(weights[2].clone()),
            bv: tape.constant(biases[2].clone()),
            wo: tape.constant(weights[3].clone()),
            bo: tape.constant(biases[3].clone()),
        };
        let y = nn::causal_attention(&mut tape, xid, &p, heads).unwrap();
        tape.value(y).clone()
    };

    let y0 = run(&base);
    assert_eq!(y0.shape(), base.shape());

    // Perturb position t; outputs strictly before t must not move.
    let t_perturb = 4;
    let mut bumped = base.clone();
    for c in 0..d {
        bumped.data_mut()[(0 * seq + t_perturb) * d + c] += 3.0;
    }
    let y1 = run(&bumped);
    for t in 0..t_perturb {
        for c in 0..d {
            let i = (0 * seq + t) * d + c;
            assert_eq!(y0.data()[i], y1.data()[i], "leak at position {t}");
        }
    }
}

#[test]
fn sequence_length_one_attention_is_value_projection() {
    let mut s = RandomStream::new(78);
    let d = 4;
    let x = rand_t(vec![1, 1, d], 1.0, &mut s);
    let wv = rand_t(vec![d, d], 0.5, &mut s);
    let wo = rand_t(vec![d, d], 0.5, &mut s);
    let zeros_w = Tensor::zeros(vec![d, d]);
    let zeros_b = Tensor::zeros(vec![d]);

    let mut tape = Tape::new();
    let xid = tape.constant(x.clone());
    let p = nn::AttentionParams {
        wq: tape.constant(zeros_w.clone()),
        bq: tape.constant(zeros_b.clone()),
        wk: tape.constant(zeros_w.clone()),
        bk: tape.constant(zeros_b.clone()),
        wv: tape.constant(wv.clone()),
        bv: tape.constant(zeros_b.clone()),
        wo: tape.constant(wo.clone()),
        bo: tape.constant(zeros_b.clone()),
    };
    let y = nn::causal_attention(&mut tape, xid, &p, 2).unwrap();

    // One token attends only to itself: output = x Wv Wo.
    let xv = x.to_matrix_like(d);
    let expected = xv.matmul(&wv.to_matrix()).matmul(&wo.to_matrix());
    let got = tape.value(y);
    for (g, e) in got.data().iter().zip(expected.data()) {
        assert!((g - e).abs() < 1e-12);
    }
}

trait ToMatrixLike {
    fn to_matrix_like(&self, d: usize) -> numkit::Matrix;
}

impl ToMatrixLike for Tensor {
    fn to_matrix_like(&self, d: usize) -> numkit::Matrix {
        numkit::Matrix::from_vec(self.len() / d, d, self.data().to_vec()).unwrap()
    }
}

#[test]
fn layer_norm_statistics() {
    let mut s = RandomStream::new(79);
    let d = 16;
    let x = rand_t(vec![4, d], 2.0, &mut s);
    let mut tape = Tape::new();
    let xid = tape.constant(x);
    let gain = tape.constant(Tensor::new(vec![d], vec![1.0; d]).unwrap());
    let bias = tape.constant(Tensor::zeros(vec![d]));
    let y = tape.layer_norm(xid, gain, bias);
    for r in 0..4 {
        let row = &tape.value(y).data()[r * d..(r + 1) * d];
        let mean: f64 = row.iter().sum::<f64>() / d as f64;
        let var: f64 = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        assert!(mean.abs() <= 1e-10, "mean {mean}");
        assert!((var - 1.0).abs() <= 1e-8, "var {var}");
    }

    // Constant rows normalize to the learned shift.
    let mut tape = Tape::new();
    let xid = tape.constant(Tensor::new(vec![1, 4], vec![3.0; 4]).unwrap());
    let gain = tape.constant(Tensor::new(vec![4], vec![2.0; 4]).unwrap());
    let bias = tape.constant(Tensor::new(vec![4], vec![0.5; 4]).unwrap());
    let y = tape.layer_norm(xid, gain, bias);
    for v in tape.value(y).data() {
        assert!((v - 0.5).abs() < 1e-9);
    }
}

#[test]
fn feed_forward_zero_weights_broadcasts_bias() {
    let d = 3;
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::new(vec![1, 2, d], vec![0.3; 6]).unwrap());
    let p = nn::FeedForwardParams {
        w1: tape.constant(Tensor::zeros(vec![d, 4 * d])),
        b1: tape.constant(Tensor::zeros(vec![4 * d])),
        w2: tape.constant(Tensor::zeros(vec![4 * d, d])),
        b2: tape.constant(Tensor::new(vec![d], vec![1.5, -2.0, 0.25]).unwrap()),
    };
    let y = nn::feed_forward(&mut tape, x, &p);
    for t in 0..2 {
        let row = &tape.value(y).data()[t * d..(t + 1) * d];
        assert_eq!(row, &[1.5, -2.0, 0.25]);
    }
}

fn build_generator_params(
    tape: &mut Tape,
    d: usize,
    hidden: usize,
    n: usize,
    gate_bias: f64,
    zero: bool,
    s: &mut RandomStream,
) -> GeneratorParams {
    let mut head = |dout: usize, s: &mut RandomStream| -> MlpHead {
        let std = if zero { 0.0 } else { 0.2 };
        MlpHead {
            w1: tape.leaf(rand_t(vec![d, hidden], std, s), false),
            b1: tape.leaf(Tensor::zeros(vec![hidden]), false),
            w2: tape.leaf(rand_t(vec![hidden, dout], std, s), false),
            b2: tape.leaf(Tensor::zeros(vec![dout]), false),
        }
    };
    let u = head(n, s);
    let v = head(n, s);
    let k = head(n, s);
    let beta = head(1, s);
    GeneratorParams {
        u,
        v,
        k,
        beta,
        gate_w: tape.leaf(Tensor::zeros(vec![d, 1]), false),
        gate_b: tape.leaf(Tensor::new(vec![1], vec![gate_bias]).unwrap(), false),
    }
}

#[test]
fn generator_head_anchors() {
    let mut s = RandomStream::new(80);
    // Zero weights and biases: beta = softplus(0) = ln 2.
    let mut tape = Tape::new();
    let pooled = tape.constant(rand_t(vec![2, 6], 1.0, &mut s));
    let p = build_generator_params(&mut tape, 6, 3, 4, 0.0, true, &mut s);
    let vars = generators_forward(&mut tape, pooled, &p);
    let out = GeneratorOutputs::from_vars(&tape, &vars, 0);
    assert!((out.beta - std::f64::consts::LN_2).abs() < 1e-12);
    assert!((out.gamma - 0.5).abs() < 1e-12);

    // Gate bias -1.5 with zero gate weight: gamma = sigmoid(-1.5) ~ 0.182.
    let mut tape = Tape::new();
    let pooled = tape.constant(rand_t(vec![2, 6], 1.0, &mut s));
    let p = build_generator_params(&mut tape, 6, 3, 4, -1.5, false, &mut s);
    let vars = generators_forward(&mut tape, pooled, &p);
    let out = GeneratorOutputs::from_vars(&tape, &vars, 1);
    assert!((out.gamma - 0.18242552380635635).abs() < 1e-12);
}

#[test]
fn generator_outputs_satisfy_invariants_in_bulk() {
    let mut s = RandomStream::new(81);
    let (d, hidden, n) = (8, 2, 4);
    let batch = 100;
    for round in 0..100 {
        let mut tape = Tape::new();
        let pooled = tape.constant(rand_t(vec![batch, d], 2.0, &mut s));
        let p = build_generator_params(&mut tape, d, hidden, n, 0.3, false, &mut s);
        let vars = generators_forward(&mut tape, pooled, &p);
        for row in 0..batch {
            let out = GeneratorOutputs::from_vars(&tape, &vars, row);
            assert!(out.beta > 0.0, "round {round}: beta {}", out.beta);
            let knorm: f64 = out.k.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((knorm - 1.0).abs() <= 1e-9, "round {round}: |k| {knorm}");
            assert!(
                out.gamma > 0.0 && out.gamma < 1.0,
                "round {round}: gamma {}",
                out.gamma
            );
        }
    }
}

#[test]
fn stream_apply_preserves_norms_under_orthogonal_q() {
    let mut s = RandomStream::new(82);
    let (bs, seq, n, d) = (3, 5, 4, 8);
    let dim = n * d;
    let mut tape = Tape::new();
    let x = tape.constant(rand_t(vec![bs, seq, dim], 1.0, &mut s));
    let u = tape.constant(rand_t(vec![bs, n], 1.0, &mut s));
    let v = tape.constant(rand_t(vec![bs, n], 1.0, &mut s));
    let beta_t = Tensor::new(vec![bs], (0..bs).map(|_| s.next_f64() * 5.0).collect()).unwrap();
    let beta = tape.constant(beta_t);
    let q = batched_cayley(&mut tape, u, v, beta);
    let y = tape.stream_apply(x, q, n);
    let xd = tape.value(x).data();
    let yd = tape.value(y).data();
    for pos in 0..bs * seq {
        let nx: f64 = xd[pos * dim..(pos + 1) * dim].iter().map(|v| v * v).sum::<f64>();
        let ny: f64 = yd[pos * dim..(pos + 1) * dim].iter().map(|v| v * v).sum::<f64>();
        assert!((nx.sqrt() - ny.sqrt()).abs() <= 1e-10 * nx.sqrt().max(1.0));
    }
}

#[test]
fn stream_apply_identity_and_rotation_examples() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::new(vec![1, 1, 2], vec![3.0, -4.0]).unwrap());
    let eye = tape.eye_batch(1, 2);
    let y = tape.stream_apply(x, eye, 2);
    assert_eq!(tape.value(y).data(), &[3.0, -4.0]);

    // n=2, d=1, quarter-turn [[0,-1],[1,0]]: (a, b) -> (-b, a).
    let rot = tape.constant(Tensor::new(vec![1, 2, 2], vec![0.0, -1.0, 1.0, 0.0]).unwrap());
    let y = tape.stream_apply(x, rot, 2);
    assert_eq!(tape.value(y).data(), &[4.0, 3.0]);
}

#[test]
fn batched_cayley_is_orthogonal_and_householder_matches_closed_form() {
    let mut s = RandomStream::new(83);
    let (bs, n) = (6, 4);
    let mut tape = Tape::new();
    let u = tape.constant(rand_t(vec![bs, n], 1.0, &mut s));
    let v = tape.constant(rand_t(vec![bs, n], 1.0, &mut s));
    let beta_t = Tensor::new(vec![bs], (0..bs).map(|_| s.next_f64() * 100.0).collect()).unwrap();
    let beta = tape.constant(beta_t);
    let q = batched_cayley(&mut tape, u, v, beta);
    for b in 0..bs {
        let m = numkit::Matrix::from_vec(
            n,
            n,
            tape.value(q).data()[b * n * n..(b + 1) * n * n].to_vec(),
        )
        .unwrap();
        assert!(m.gram_deviation() <= 1e-10);
    }

    let kt = rand_t(vec![bs, n], 1.0, &mut s);
    let kid = tape.constant(kt.clone());
    let k = tape.normalize_rows(kid);
    let h = batched_householder(&mut tape, k, 2.0);
    for b in 0..bs {
        let kb = &tape.value(k).data()[b * n..(b + 1) * n];
        let href = geometry_like_householder(kb);
        let hb = &tape.value(h).data()[b * n * n..(b + 1) * n * n];
        for (a, e) in hb.iter().zip(href.iter()) {
            assert!((a - e).abs() < 1e-12);
        }
    }
}

fn geometry_like_householder(k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let mut h = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] = if i == j { 1.0 } else { 0.0 };
            h[i * n + j] -= 2.0 * k[i] * k[j];
        }
    }
    h
}
