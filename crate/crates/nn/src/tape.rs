//! Reverse-mode autodiff over a flat tape of eagerly-evaluated ops.
//!
//! Each op records its parents and enough context to run its backward
//! rule; `backward` walks the tape once in reverse and accumulates
//! gradients. Interior gradients are dropped as soon as their node has
//! been processed, so peak memory is bounded by the activations plus one
//! live gradient frontier.

use crate::kernels::dgemm;
use numkit::{LuFactors, Matrix, Tensor};
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarId(pub(crate) u32);

impl VarId {
    fn idx(self) -> usize {
        self.0 as usize
    }
}

enum Op {
    Leaf,
    Add(VarId, VarId),
    Sub(VarId, VarId),
    Mul(VarId, VarId),
    Scale(VarId, f64),
    AddRowBias(VarId, VarId),
    Matmul(VarId, VarId),
    MatmulNT(VarId, VarId),
    Affine {
        x: VarId,
        w: VarId,
        b: VarId,
    },
    BatchMatmul(VarId, VarId),
    Reshape(VarId),
    SplitHeads {
        x: VarId,
        batch: usize,
        seq: usize,
        heads: usize,
    },
    MergeHeads {
        x: VarId,
        batch: usize,
        seq: usize,
        heads: usize,
    },
    AttentionCore {
        q: VarId,
        k: VarId,
        v: VarId,
        probs: Tensor,
        scale: f64,
    },
    Gelu {
        x: VarId,
        /// tanh(u) cached from the forward pass; the backward rule reuses it.
        tanh_vals: Vec<f64>,
    },
    Sigmoid(VarId),
    Softplus(VarId),
    Exp(VarId),
    LayerNorm {
        x: VarId,
        gain: VarId,
        bias: VarId,
        mean: Vec<f64>,
        rstd: Vec<f64>,
    },
    MeanAxis1(VarId),
    MeanAll(VarId),
    MseLoss {
        pred: VarId,
        target: Tensor,
    },
    StreamApply {
        x: VarId,
        q: VarId,
        n_streams: usize,
    },
    BatchOuter(VarId, VarId),
    BatchScale {
        a: VarId,
        s: VarId,
    },
    BatchSolve {
        a: VarId,
        b: VarId,
    },
    Solve2 {
        a: VarId,
        b: VarId,
    },
    GateBlend {
        gamma: VarId,
        a: VarId,
        b: VarId,
    },
    NormalizeRows(VarId),
    HouseholderApply {
        x: VarId,
        k: VarId,
        beta: VarId,
    },
    AddPositional {
        x: VarId,
        pos: VarId,
    },
    RowNormalize(VarId),
    ColNormalize(VarId),
    BroadcastBatch {
        m: VarId,
        batch: usize,
    },
    SoftmaxRows(VarId),
    StreamAggregate {
        x: VarId,
        w: VarId,
        n_streams: usize,
    },
    StreamDistribute {
        h: VarId,
        w: VarId,
        n_streams: usize,
    },
    SkewFromLower {
        e: VarId,
        n: usize,
    },
    SumScalars(Vec<VarId>),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Leaf gradients produced by one backward pass.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, id: VarId) -> Option<&Tensor> {
        self.grads[id.idx()].as_ref()
    }

    pub fn take(&mut self, id: VarId) -> Option<Tensor> {
        self.grads[id.idx()].take()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: VarId) -> &Tensor {
        &self.nodes[id.idx()].value
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> VarId {
        let id = VarId(self.nodes.len() as u32);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        id
    }

    fn requires(&self, id: VarId) -> bool {
        self.nodes[id.idx()].requires_grad
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> VarId {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, value: Tensor) -> VarId {
        self.push(value, Op::Leaf, false)
    }

    /// Batched identity matrices, as a constant.
    pub fn eye_batch(&mut self, batch: usize, n: usize) -> VarId {
        let mut data = vec![0.0; batch * n * n];
        for b in 0..batch {
            for i in 0..n {
                data[b * n * n + i * n + i] = 1.0;
            }
        }
        self.constant(Tensor::new(vec![batch, n, n], data).unwrap())
    }

    pub fn add(&mut self, a: VarId, b: VarId) -> VarId {
        assert_eq!(self.value(a).shape(), self.value(b).shape(), "add shapes");
        let data = zip_map(self.value(a), self.value(b), |x, y| x + y);
        let shape = self.value(a).shape().to_vec();
        let rg = self.requires(a) || self.requires(b);
        self.push(Tensor::new(shape, data).unwrap(), Op::Add(a, b), rg)
    }

    pub fn sub(&mut self, a: VarId, b: VarId) -> VarId {
        assert_eq!(self.value(a).shape(), self.value(b).shape(), "sub shapes");
        let data = zip_map(self.value(a), self.value(b), |x, y| x - y);
        let shape = self.value(a).shape().to_vec();
        let rg = self.requires(a) || self.requires(b);
        self.push(Tensor::new(shape, data).unwrap(), Op::Sub(a, b), rg)
    }

    pub fn mul(&mut self, a: VarId, b: VarId) -> VarId {
        assert_eq!(self.value(a).shape(), self.value(b).shape(), "mul shapes");
        let data = zip_map(self.value(a), self.value(b), |x, y| x * y);
        let shape = self.value(a).shape().to_vec();
        let rg = self.requires(a) || self.requires(b);
        self.push(Tensor::new(shape, data).unwrap(), Op::Mul(a, b), rg)
    }

    pub fn scale(&mut self, a: VarId, c: f64) -> VarId {
        let data = self.value(a).data().iter().map(|x| x * c).collect();
        let shape = self.value(a).shape().to_vec();
        let rg = self.requires(a);
        self.push(Tensor::new(shape, data).unwrap(), Op::Scale(a, c), rg)
    }

    /// Broadcast-add a (N,) bias over the last axis of any rank >= 1 tensor.
    pub fn add_row_bias(&mut self, x: VarId, bias: VarId) -> VarId {
        let xs = self.value(x).shape().to_vec();
        let n = *xs.last().expect("rank >= 1");
        assert_eq!(self.value(bias).shape(), &[n]);
        let mut data = self.value(x).data().to_vec();
        let b = self.value(bias).data();
        for row in data.chunks_mut(n) {
            for (v, bv) in row.iter_mut().zip(b) {
                *v += bv;
            }
        }
        let rg = self.requires(x) || self.requires(bias);
        self.push(Tensor::new(xs, data).unwrap(), Op::AddRowBias(x, bias), rg)
    }

    /// (..., K) x (K, N): leading axes of `a` are treated as one flattened
    /// row dimension, so rank-3 activations multiply without reshaping.
    pub fn matmul(&mut self, a: VarId, b: VarId) -> VarId {
        let (asha, bsha) = (
            self.value(a).shape().to_vec(),
            self.value(b).shape().to_vec(),
        );
        assert!(asha.len() >= 2);
        assert_eq!(bsha.len(), 2);
        let k = *asha.last().unwrap();
        assert_eq!(k, bsha[0], "matmul inner dim");
        let n = bsha[1];
        let m = self.value(a).len() / k;
        let mut out = vec![0.0; m * n];
        dgemm(
            m,
            k,
            n,
            1.0,
            self.value(a).data(),
            false,
            self.value(b).data(),
            false,
            0.0,
            &mut out,
        );
        let mut shape = asha;
        *shape.last_mut().unwrap() = n;
        let rg = self.requires(a) || self.requires(b);
        self.push(Tensor::new(shape, out).unwrap(), Op::Matmul(a, b), rg)
    }

    /// (..., K) x (N, K)^T -> (..., N), leading axes flattened as in matmul.
    pub fn matmul_nt(&mut self, a: VarId, b: VarId) -> VarId {
        let (asha, bsha) = (
            self.value(a).shape().to_vec(),
            self.value(b).shape().to_vec(),
        );
        assert!(asha.len() >= 2);
        assert_eq!(bsha.len(), 2);
        let k = *asha.last().unwrap();
        assert_eq!(k, bsha[1], "matmul_nt inner dim");
        let n = bsha[0];
        let m = self.value(a).len() / k;
        let mut out = vec![0.0; m * n];
        dgemm(
            m,
            k,
            n,
            1.0,
            self.value(a).data(),
            false,
            self.value(b).data(),
            true,
            0.0,
            &mut out,
        );
        let mut shape = asha;
        *shape.last_mut().unwrap() = n;
        let rg = self.requires(a) || self.requires(b);
        self.push(Tensor::new(shape, out).unwrap(), Op::MatmulNT(a, b), rg)
    }

    /// Fused (..., K) x (K, N) + bias(N): one node, bias seeded into the
    /// output buffer and the product accumulated on top.
    pub fn affine(&mut self, x: VarId, w: VarId, b: VarId) -> VarId {
        let xsha = self.value(x).shape().to_vec();
        let wsha = self.value(w).shape().to_vec();
        assert!(xsha.len() >= 2);
        assert_eq!(wsha.len(), 2);
        let k = *xsha.last().unwrap();
        assert_eq!(k, wsha[0], "affine inner dim");
        let n = wsha[1];
        assert_eq!(self.value(b).shape(), &[n]);
        let m = self.value(x).len() / k;
        let bd = self.value(b).data();
        let mut out = vec![0.0; m * n];
        for row in out.chunks_mut(n) {
            row.copy_from_slice(bd);
        }
        dgemm(
            m,
            k,
            n,
            1.0,
            self.value(x).data(),
            false,
            self.value(w).data(),
            false,
            1.0,
            &mut out,
        );
        let mut shape = xsha;
        *shape.last_mut().unwrap() = n;
        let rg = self.requires(x) || self.requires(w) || self.requires(b);
        self.push(Tensor::new(shape, out).unwrap(), Op::Affine { x, w, b }, rg)
    }

    /// (B, M, K) x (B, K, N).
    pub fn batch_matmul(&mut self, a: VarId, b: VarId) -> VarId {
        let (asha, bsha) = (
            self.value(a).shape().to_vec(),
            self.value(b).shape().to_vec(),
        );
        assert_eq!(asha.len(), 3);
        assert_eq!(bsha.len(), 3);
        assert_eq!(asha[0], bsha[0]);
        assert_eq!(asha[2], bsha[1]);
        let (bs, m, k, n) = (asha[0], asha[1], asha[2], bsha[2]);
        let mut out = vec![0.0; bs * m * n];
        for i in 0..bs {
            let mut c = vec![0.0; m * n];
            dgemm(
                m,
                k,
                n,
                1.0,
                &self.value(a).data()[i * m * k..(i + 1) * m * k],
                false,
                &self.value(b).data()[i * k * n..(i + 1) * k * n],
                false,
                0.0,
                &mut c,
            );
            out[i * m * n..(i + 1) * m * n].copy_from_slice(&c);
        }
        let rg = self.requires(a) || self.requires(b);
        self.push(
            Tensor::new(vec![bs, m, n], out).unwrap(),
            Op::BatchMatmul(a, b),
            rg,
        )
    }

    pub fn reshape(&mut self, x: VarId, shape: Vec<usize>) -> VarId {
        let t = self.value(x).reshaped(shape);
        let rg = self.requires(x);
        self.push(t, Op::Reshape(x), rg)
    }

    /// (B, S, H*dk) or (B*S, H*dk) -> (B*H, S, dk).
    pub fn split_heads(&mut self, x: VarId, batch: usize, seq: usize, heads: usize) -> VarId {
        let xs = self.value(x).shape();
        let d = *xs.last().unwrap();
        assert_eq!(self.value(x).len(), batch * seq * d);
        assert_eq!(d % heads, 0);
        let dk = d / heads;
        let src = self.value(x).data();
        let mut out = vec![0.0; src.len()];
        for b in 0..batch {
            for h in 0..heads {
                for s in 0..seq {
                    let from = (b * seq + s) * heads * dk + h * dk;
                    let to = ((b * heads + h) * seq + s) * dk;
                    out[to..to + dk].copy_from_slice(&src[from..from + dk]);
                }
            }
        }
        let rg = self.requires(x);
        self.push(
            Tensor::new(vec![batch * heads, seq, dk], out).unwrap(),
            Op::SplitHeads { x, batch, seq, heads },
            rg,
        )
    }

    /// (B*H, S, dk) -> (B, S, H*dk).
    pub fn merge_heads(&mut self, x: VarId, batch: usize, seq: usize, heads: usize) -> VarId {
        let xs = self.value(x).shape();
        assert_eq!(xs[0], batch * heads);
        assert_eq!(xs[1], seq);
        let dk = xs[2];
        let src = self.value(x).data();
        let mut out = vec![0.0; src.len()];
        for b in 0..batch {
            for h in 0..heads {
                for s in 0..seq {
                    let from = ((b * heads + h) * seq + s) * dk;
                    let to = (b * seq + s) * heads * dk + h * dk;
                    out[to..to + dk].copy_from_slice(&src[from..from + dk]);
                }
            }
        }
        let rg = self.requires(x);
        self.push(
            Tensor::new(vec![batch, seq, heads * dk], out).unwrap(),
            Op::MergeHeads { x, batch, seq, heads },
            rg,
        )
    }

    /// Causal scaled dot-product attention over (BH, S, dk) inputs.
    pub fn attention_core(&mut self, q: VarId, k: VarId, v: VarId) -> VarId {
        let qs = self.value(q).shape().to_vec();
        assert_eq!(qs.len(), 3);
        assert_eq!(self.value(k).shape(), &qs[..]);
        assert_eq!(self.value(v).shape(), &qs[..]);
        let (bh, s, dk) = (qs[0], qs[1], qs[2]);
        let scale = 1.0 / (dk as f64).sqrt();
        let qd = self.value(q).data();
        let kd = self.value(k).data();
        let vd = self.value(v).data();
        let mut probs = vec![0.0; bh * s * s];
        let mut out = vec![0.0; bh * s * dk];
        probs
            .par_chunks_mut(s * s)
            .zip(out.par_chunks_mut(s * dk))
            .enumerate()
            .for_each(|(i, (p_chunk, o_chunk))| {
                let qb = &qd[i * s * dk..(i + 1) * s * dk];
                let kb = &kd[i * s * dk..(i + 1) * s * dk];
                let vb = &vd[i * s * dk..(i + 1) * s * dk];
                // Scores = scale * Q K^T (full square; only j <= t survives
                // the masked softmax below).
                dgemm(s, dk, s, scale, qb, false, kb, true, 0.0, p_chunk);
                for t in 0..s {
                    let prow = &mut p_chunk[t * s..(t + 1) * s];
                    let mut maxv = f64::NEG_INFINITY;
                    for &sc in prow[..=t].iter() {
                        if sc > maxv {
                            maxv = sc;
                        }
                    }
                    let mut denom = 0.0;
                    for pv in prow[..=t].iter_mut() {
                        let e = (*pv - maxv).exp();
                        *pv = e;
                        denom += e;
                    }
                    let inv = 1.0 / denom;
                    for pv in prow[..=t].iter_mut() {
                        *pv *= inv;
                    }
                    for pv in prow[t + 1..].iter_mut() {
                        *pv = 0.0;
                    }
                }
                // Out = P V.
                dgemm(s, s, dk, 1.0, p_chunk, false, vb, false, 0.0, o_chunk);
            });
        let rg = self.requires(q) || self.requires(k) || self.requires(v);
        self.push(
            Tensor::new(vec![bh, s, dk], out).unwrap(),
            Op::AttentionCore {
                q,
                k,
                v,
                probs: Tensor::new(vec![bh, s, s], probs).unwrap(),
                scale,
            },
            rg,
        )
    }

    pub fn gelu(&mut self, x: VarId) -> VarId {
        let xd = self.value(x).data();
        let mut tanh_vals = vec![0.0; xd.len()];
        let mut data = vec![0.0; xd.len()];
        // tanh dominates the cost; compute it once in parallel fixed-size
        // chunks and keep it for the backward rule.
        tanh_vals
            .par_chunks_mut(1 << 14)
            .zip(data.par_chunks_mut(1 << 14))
            .enumerate()
            .for_each(|(ci, (tc, yc))| {
                let base = ci << 14;
                for j in 0..tc.len() {
                    let v = xd[base + j];
                    let t = fast_tanh(GELU_C * (v + GELU_A * v * v * v));
                    tc[j] = t;
                    yc[j] = 0.5 * v * (1.0 + t);
                }
            });
        let shape = self.value(x).shape().to_vec();
        let rg = self.requires(x);
        self.push(
            Tensor::new(shape, data).unwrap(),
            Op::Gelu { x, tanh_vals },
            rg,
        )
    }

    pub fn sigmoid(&mut self, x: VarId) -> VarId {
        let data = self.value(x).data().iter().map(|&v| sigmoid_fwd(v)).collect();
        let shape = self.value(x).shape().to_vec();
        let rg = self.requires(x);
        self.push(Tensor::new(shape, data).unwrap(), Op::Sigmoid(x), rg)
    }

    pub fn softplus(&mut self, x: VarId) -> VarId {
        let data = self
            .value(x)
            .data()
            .iter()
            .map(|&v| v.max(0.0) + (-v.abs()).exp().ln_1p())
            .collect();
        let shape = self.value(x).shape().to_vec();
        let rg = self.requires(x);
        self.push(Tensor::new(shape, data).unwrap(), Op::Softplus(x), rg)
    }

    pub fn exp(&mut self, x: VarId) -> VarId {
        let data = self.value(x).data().iter().map(|&v| v.exp()).collect();
        let shape = self.value(x).shape().to_vec();
        let rg = self.requires(x);
        self.push(Tensor::new(shape, data).unwrap(), Op::Exp(x), rg)
    }

    /// Normalize the last axis to zero mean and unit variance, then apply a
    /// learned gain and shift.
    pub fn layer_norm(&mut self, x: VarId, gain: VarId, bias: VarId) -> VarId {
        const EPS: f64 = 1e-12;
        let shape = self.value(x).shape().to_vec();
        let d = *shape.last().expect("layer_norm needs rank >= 1");
        assert_eq!(self.value(gain).shape(), &[d]);
        assert_eq!(self.value(bias).shape(), &[d]);
        let rows = self.value(x).len() / d;
        let xd = self.value(x).data();
        let g = self.value(gain).data();
        let b = self.value(bias).data();
        let mut out = vec![0.0; xd.len()];
        let mut mean = vec![0.0; rows];
        let mut rstd = vec![0.0; rows];
        for r in 0..rows {
            let row = &xd[r * d..(r + 1) * d];
            let m: f64 = row.iter().sum::<f64>() / d as f64;
            let var: f64 = row.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / d as f64;
            let rs = 1.0 / (var + EPS).sqrt();
            mean[r] = m;
            rstd[r] = rs;
            let orow = &mut out[r * d..(r + 1) * d];
            for c in 0..d {
                orow[c] = (row[c] - m) * rs * g[c] + b[c];
            }
        }
        let rg = self.requires(x) || self.requires(gain) || self.requires(bias);
        self.push(
            Tensor::new(shape, out).unwrap(),
            Op::LayerNorm {
                x,
                gain,
                bias,
                mean,
                rstd,
            },
            rg,
        )
    }

    /// Mean over the sequence axis: (B, S, D) -> (B, D).
    pub fn mean_axis1(&mut self, x: VarId) -> VarId {
        let shape = self.value(x).shape().to_vec();
        assert_eq!(shape.len(), 3);
        let (bs, s, d) = (shape[0], shape[1], shape[2]);
        assert!(s > 0, "mean over an empty sequence");
        let xd = self.value(x).data();
        let mut out = vec![0.0; bs * d];
        for b in 0..bs {
            for t in 0..s {
                let row = &xd[(b * s + t) * d..(b * s + t + 1) * d];
                let orow = &mut out[b * d..(b + 1) * d];
                for c in 0..d {
                    orow[c] += row[c];
                }
            }
            for v in out[b * d..(b + 1) * d].iter_mut() {
                *v /= s as f64;
            }
        }
        let rg = self.requires(x);
        self.push(
            Tensor::new(vec![bs, d], out).unwrap(),
            Op::MeanAxis1(x),
            rg,
        )
    }

    pub fn mean_all(&mut self, x: VarId) -> VarId {
        let n = self.value(x).len() as f64;
        let s: f64 = self.value(x).data().iter().sum();
        let rg = self.requires(x);
        self.push(Tensor::scalar(s / n), Op::MeanAll(x), rg)
    }

    /// Mean squared error against a constant target.
    pub fn mse_loss(&mut self, pred: VarId, target: &Tensor) -> VarId {
        assert_eq!(self.value(pred).shape(), target.shape());
        let n = target.len() as f64;
        let s: f64 = self
            .value(pred)
            .data()
            .iter()
            .zip(target.data())
            .map(|(p, t)| (p - t) * (p - t))
            .sum();
        let rg = self.requires(pred);
        self.push(
            Tensor::scalar(s / n),
            Op::MseLoss {
                pred,
                target: target.clone(),
            },
            rg,
        )
    }

    /// Left-multiply the per-channel stream vector by a per-sample (n, n)
    /// matrix. Channels are stream-major: stream i owns [i*d, (i+1)*d).
    pub fn stream_apply(&mut self, x: VarId, q: VarId, n_streams: usize) -> VarId {
        let xs = self.value(x).shape().to_vec();
        let qs = self.value(q).shape().to_vec();
        assert_eq!(xs.len(), 3);
        assert_eq!(qs, vec![xs[0], n_streams, n_streams], "stream matrix shape");
        let (bs, s, dim) = (xs[0], xs[1], xs[2]);
        assert_eq!(dim % n_streams, 0, "embedding not divisible by streams");
        let d = dim / n_streams;
        let xd = self.value(x).data();
        let qd = self.value(q).data();
        let mut out = vec![0.0; xd.len()];
        stream_apply_kernel(xd, qd, &mut out, bs, s, n_streams, d, false);
        let rg = self.requires(x) || self.requires(q);
        self.push(
            Tensor::new(xs, out).unwrap(),
            Op::StreamApply { x, q, n_streams },
            rg,
        )
    }

    /// (B, n) x (B, m) -> (B, n, m) outer products.
    pub fn batch_outer(&mut self, u: VarId, v: VarId) -> VarId {
        let us = self.value(u).shape().to_vec();
        let vs = self.value(v).shape().to_vec();
        assert_eq!(us.len(), 2);
        assert_eq!(vs.len(), 2);
        assert_eq!(us[0], vs[0]);
        let (bs, n, m) = (us[0], us[1], vs[1]);
        let ud = self.value(u).data();
        let vd = self.value(v).data();
        let mut out = vec![0.0; bs * n * m];
        for b in 0..bs {
            for i in 0..n {
                let coeff = ud[b * n + i];
                let orow = &mut out[(b * n + i) * m..(b * n + i + 1) * m];
                let vrow = &vd[b * m..(b + 1) * m];
                for j in 0..m {
                    orow[j] = coeff * vrow[j];
                }
            }
        }
        let rg = self.requires(u) || self.requires(v);
        self.push(
            Tensor::new(vec![bs, n, m], out).unwrap(),
            Op::BatchOuter(u, v),
            rg,
        )
    }

    /// Scale each batch element of `a` by the matching scalar in `s` (B,).
    pub fn batch_scale(&mut self, a: VarId, s: VarId) -> VarId {
        let ash = self.value(a).shape().to_vec();
        let ssh = self.value(s).shape().to_vec();
        assert_eq!(ssh, vec![ash[0]]);
        let per = self.value(a).len() / ash[0];
        let ad = self.value(a).data();
        let sd = self.value(s).data();
        let mut out = vec![0.0; ad.len()];
        for b in 0..ash[0] {
            let c = sd[b];
            for i in 0..per {
                out[b * per + i] = ad[b * per + i] * c;
            }
        }
        let rg = self.requires(a) || self.requires(s);
        self.push(
            Tensor::new(ash, out).unwrap(),
            Op::BatchScale { a, s },
            rg,
        )
    }

    /// Per-sample solve: X_b = A_b^{-1} B_b over (B, n, n) stacks.
    pub fn batch_solve(&mut self, a: VarId, b: VarId) -> VarId {
        let ash = self.value(a).shape().to_vec();
        let bsh = self.value(b).shape().to_vec();
        assert_eq!(ash.len(), 3);
        assert_eq!(ash[1], ash[2]);
        assert_eq!(ash, bsh);
        let (bs, n) = (ash[0], ash[1]);
        let ad = self.value(a).data();
        let bd = self.value(b).data();
        let mut out = vec![0.0; ad.len()];
        for i in 0..bs {
            let am = Matrix::from_vec(n, n, ad[i * n * n..(i + 1) * n * n].to_vec())
                .expect("finite batch_solve lhs");
            let bm = Matrix::from_vec(n, n, bd[i * n * n..(i + 1) * n * n].to_vec())
                .expect("finite batch_solve rhs");
            let x = LuFactors::new(&am)
                .and_then(|lu| lu.solve(&bm))
                .expect("batch_solve: singular system");
            out[i * n * n..(i + 1) * n * n].copy_from_slice(x.data());
        }
        let rg = self.requires(a) || self.requires(b);
        self.push(
            Tensor::new(ash, out).unwrap(),
            Op::BatchSolve { a, b },
            rg,
        )
    }

    /// Single solve: X = A^{-1} B over (n, n) / (n, m).
    pub fn solve2(&mut self, a: VarId, b: VarId) -> VarId {
        let am = self.value(a).to_matrix();
        let bm = self.value(b).to_matrix();
        let x = LuFactors::new(&am)
            .and_then(|lu| lu.solve(&bm))
            .expect("solve2: singular system");
        let rg = self.requires(a) || self.requires(b);
        self.push(Tensor::from_matrix(&x), Op::Solve2 { a, b }, rg)
    }

    /// Per-sample convex blend: y_b = gamma_b * a_b + (1 - gamma_b) * b_b.
    pub fn gate_blend(&mut self, gamma: VarId, a: VarId, b: VarId) -> VarId {
        let ash = self.value(a).shape().to_vec();
        assert_eq!(self.value(b).shape(), &ash[..]);
        assert_eq!(self.value(gamma).shape(), &[ash[0]]);
        let per = self.value(a).len() / ash[0];
        let gd = self.value(gamma).data();
        let ad = self.value(a).data();
        let bd = self.value(b).data();
        let mut out = vec![0.0; ad.len()];
        for i in 0..ash[0] {
            let g = gd[i];
            for j in 0..per {
                out[i * per + j] = g * ad[i * per + j] + (1.0 - g) * bd[i * per + j];
            }
        }
        let rg = self.requires(gamma) || self.requires(a) || self.requires(b);
        self.push(
            Tensor::new(ash, out).unwrap(),
            Op::GateBlend { gamma, a, b },
            rg,
        )
    }

    /// Normalize each row of (B, n) to unit Euclidean norm.
    pub fn normalize_rows(&mut self, x: VarId) -> VarId {
        let shape = self.value(x).shape().to_vec();
        assert_eq!(shape.len(), 2);
        let (bs, n) = (shape[0], shape[1]);
        let xd = self.value(x).data();
        let mut out = vec![0.0; xd.len()];
        for b in 0..bs {
            let row = &xd[b * n..(b + 1) * n];
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-30);
            for (o, v) in out[b * n..(b + 1) * n].iter_mut().zip(row) {
                *o = v / norm;
            }
        }
        let rg = self.requires(x);
        self.push(
            Tensor::new(shape, out).unwrap(),
            Op::NormalizeRows(x),
            rg,
        )
    }

    /// Rank-one reflection along per-sample direction k:
    /// y = x - beta * k (k . x) applied at every position.
    pub fn householder_apply(&mut self, x: VarId, k: VarId, beta: VarId) -> VarId {
        let xs = self.value(x).shape().to_vec();
        assert_eq!(xs.len(), 3);
        let (bs, s, d) = (xs[0], xs[1], xs[2]);
        assert_eq!(self.value(k).shape(), &[bs, d]);
        assert_eq!(self.value(beta).shape(), &[bs]);
        let xd = self.value(x).data();
        let kd = self.value(k).data();
        let betad = self.value(beta).data();
        let mut out = vec![0.0; xd.len()];
        for b in 0..bs {
            let kb = &kd[b * d..(b + 1) * d];
            let bb = betad[b];
            for t in 0..s {
                let row = &xd[(b * s + t) * d..(b * s + t + 1) * d];
                let c: f64 = kb.iter().zip(row).map(|(a, x)| a * x).sum();
                let orow = &mut out[(b * s + t) * d..(b * s + t + 1) * d];
                for j in 0..d {
                    orow[j] = row[j] - bb * c * kb[j];
                }
            }
        }
        let rg = self.requires(x) || self.requires(k) || self.requires(beta);
        self.push(
            Tensor::new(xs, out).unwrap(),
            Op::HouseholderApply { x, k, beta },
            rg,
        )
    }

    /// (B, S, D) + broadcast (S, D) positional table.
    pub fn add_positional(&mut self, x: VarId, pos: VarId) -> VarId {
        let xs = self.value(x).shape().to_vec();
        assert_eq!(xs.len(), 3);
        assert_eq!(self.value(pos).shape(), &[xs[1], xs[2]]);
        let per = xs[1] * xs[2];
        let pd = self.value(pos).data();
        let mut data = self.value(x).data().to_vec();
        for b in 0..xs[0] {
            for (v, p) in data[b * per..(b + 1) * per].iter_mut().zip(pd) {
                *v += p;
            }
        }
        let rg = self.requires(x) || self.requires(pos);
        self.push(
            Tensor::new(xs, data).unwrap(),
            Op::AddPositional { x, pos },
            rg,
        )
    }

    /// Divide each row by its sum ((n, m), strictly positive input).
    pub fn row_normalize(&mut self, x: VarId) -> VarId {
        let shape = self.value(x).shape().to_vec();
        assert_eq!(shape.len(), 2);
        let (n, m) = (shape[0], shape[1]);
        let xd = self.value(x).data();
        let mut out = vec![0.0; xd.len()];
        for i in 0..n {
            let s: f64 = xd[i * m..(i + 1) * m].iter().sum();
            for j in 0..m {
                out[i * m + j] = xd[i * m + j] / s;
            }
        }
        let rg = self.requires(x);
        self.push(Tensor::new(shape, out).unwrap(), Op::RowNormalize(x), rg)
    }

    pub fn col_normalize(&mut self, x: VarId) -> VarId {
        let shape = self.value(x).shape().to_vec();
        assert_eq!(shape.len(), 2);
        let (n, m) = (shape[0], shape[1]);
        let xd = self.value(x).data();
        let mut out = vec![0.0; xd.len()];
        for j in 0..m {
            let mut s = 0.0;
            for i in 0..n {
                s += xd[i * m + j];
            }
            for i in 0..n {
                out[i * m + j] = xd[i * m + j] / s;
            }
        }
        let rg = self.requires(x);
        self.push(Tensor::new(shape, out).unwrap(), Op::ColNormalize(x), rg)
    }

    /// Tile a (n, m) matrix into (batch, n, m).
    pub fn broadcast_batch(&mut self, m: VarId, batch: usize) -> VarId {
        let ms = self.value(m).shape().to_vec();
        assert_eq!(ms.len(), 2);
        let per = self.value(m).len();
        let md = self.value(m).data();
        let mut out = vec![0.0; batch * per];
        for b in 0..batch {
            out[b * per..(b + 1) * per].copy_from_slice(md);
        }
        let rg = self.requires(m);
        self.push(
            Tensor::new(vec![batch, ms[0], ms[1]], out).unwrap(),
            Op::BroadcastBatch { m, batch },
            rg,
        )
    }

    /// Row-wise softmax over (B, n).
    pub fn softmax_rows(&mut self, x: VarId) -> VarId {
        let shape = self.value(x).shape().to_vec();
        assert_eq!(shape.len(), 2);
        let (bs, n) = (shape[0], shape[1]);
        let xd = self.value(x).data();
        let mut out = vec![0.0; xd.len()];
        for b in 0..bs {
            let row = &xd[b * n..(b + 1) * n];
            let maxv = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut denom = 0.0;
            for j in 0..n {
                let e = (row[j] - maxv).exp();
                out[b * n + j] = e;
                denom += e;
            }
            for j in 0..n {
                out[b * n + j] /= denom;
            }
        }
        let rg = self.requires(x);
        self.push(Tensor::new(shape, out).unwrap(), Op::SoftmaxRows(x), rg)
    }

    /// Weighted sum of streams: (B, S, n*d) x (B, n) -> (B, S, d).
    pub fn stream_aggregate(&mut self, x: VarId, w: VarId, n_streams: usize) -> VarId {
        let xs = self.value(x).shape().to_vec();
        assert_eq!(xs.len(), 3);
        assert_eq!(self.value(w).shape(), &[xs[0], n_streams]);
        assert_eq!(xs[2] % n_streams, 0);
        let (bs, s, dim) = (xs[0], xs[1], xs[2]);
        let d = dim / n_streams;
        let xd = self.value(x).data();
        let wd = self.value(w).data();
        let mut out = vec![0.0; bs * s * d];
        for b in 0..bs {
            for t in 0..s {
                let row = &xd[(b * s + t) * dim..(b * s + t + 1) * dim];
                let orow = &mut out[(b * s + t) * d..(b * s + t + 1) * d];
                for i in 0..n_streams {
                    let coeff = wd[b * n_streams + i];
                    for j in 0..d {
                        orow[j] += coeff * row[i * d + j];
                    }
                }
            }
        }
        let rg = self.requires(x) || self.requires(w);
        self.push(
            Tensor::new(vec![bs, s, d], out).unwrap(),
            Op::StreamAggregate { x, w, n_streams },
            rg,
        )
    }

    /// Distribute one stream across n weighted copies: (B, S, d) x (B, n) -> (B, S, n*d).
    pub fn stream_distribute(&mut self, h: VarId, w: VarId, n_streams: usize) -> VarId {
        let hs = self.value(h).shape().to_vec();
        assert_eq!(hs.len(), 3);
        assert_eq!(self.value(w).shape(), &[hs[0], n_streams]);
        let (bs, s, d) = (hs[0], hs[1], hs[2]);
        let hd = self.value(h).data();
        let wd = self.value(w).data();
        let mut out = vec![0.0; bs * s * n_streams * d];
        for b in 0..bs {
            for t in 0..s {
                let row = &hd[(b * s + t) * d..(b * s + t + 1) * d];
                let orow =
                    &mut out[(b * s + t) * n_streams * d..(b * s + t + 1) * n_streams * d];
                for i in 0..n_streams {
                    let coeff = wd[b * n_streams + i];
                    for j in 0..d {
                        orow[i * d + j] = coeff * row[j];
                    }
                }
            }
        }
        let rg = self.requires(h) || self.requires(w);
        self.push(
            Tensor::new(vec![bs, s, n_streams * d], out).unwrap(),
            Op::StreamDistribute { h, w, n_streams },
            rg,
        )
    }

    /// Build per-sample skew matrices from strictly-lower entries (B, n(n-1)/2):
    /// A[i][j] = e[idx], A[j][i] = -e[idx] for i > j, zero diagonal.
    pub fn skew_from_lower(&mut self, e: VarId, n: usize) -> VarId {
        let es = self.value(e).shape().to_vec();
        assert_eq!(es.len(), 2);
        assert_eq!(es[1], n * (n - 1) / 2, "lower-triangle entry count");
        let bs = es[0];
        let ed = self.value(e).data();
        let mut out = vec![0.0; bs * n * n];
        for b in 0..bs {
            let mut idx = 0;
            for i in 1..n {
                for j in 0..i {
                    let v = ed[b * es[1] + idx];
                    out[b * n * n + i * n + j] = v;
                    out[b * n * n + j * n + i] = -v;
                    idx += 1;
                }
            }
        }
        let rg = self.requires(e);
        self.push(
            Tensor::new(vec![bs, n, n], out).unwrap(),
            Op::SkewFromLower { e, n },
            rg,
        )
    }

    /// Sum of scalar nodes.
    pub fn sum_scalars(&mut self, terms: &[VarId]) -> VarId {
        assert!(!terms.is_empty());
        let mut s = 0.0;
        for &t in terms {
            s += self.value(t).item();
        }
        let rg = terms.iter().any(|&t| self.requires(t));
        self.push(Tensor::scalar(s), Op::SumScalars(terms.to_vec()), rg)
    }

    /// Reverse pass from a scalar root. Leaf gradients stay available in the
    /// result; interior gradients are freed as soon as they are consumed.
    pub fn backward(&self, root: VarId) -> Gradients {
        assert_eq!(self.value(root).len(), 1, "backward from a non-scalar");
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.idx()] = Some(Tensor::scalar(1.0));
        for idx in (0..=root.idx()).rev() {
            if !self.nodes[idx].requires_grad {
                grads[idx] = None;
                continue;
            }
            let Some(gy) = grads[idx].take() else {
                continue;
            };
            let keep_leaf = matches!(self.nodes[idx].op, Op::Leaf);
            self.backward_node(idx, &gy, &mut grads);
            if keep_leaf {
                grads[idx] = Some(gy);
            }
        }
        Gradients { grads }
    }

    fn backward_node(&self, idx: usize, gy: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.acc(grads, *a, gy.data());
                self.acc(grads, *b, gy.data());
            }
            Op::Sub(a, b) => {
                self.acc(grads, *a, gy.data());
                self.acc_scaled(grads, *b, gy.data(), -1.0);
            }
            Op::Mul(a, b) => {
                let da: Vec<f64> = gy
                    .data()
                    .iter()
                    .zip(self.value(*b).data())
                    .map(|(g, v)| g * v)
                    .collect();
                let db: Vec<f64> = gy
                    .data()
                    .iter()
                    .zip(self.value(*a).data())
                    .map(|(g, v)| g * v)
                    .collect();
                self.acc_owned(grads, *a, da);
                self.acc_owned(grads, *b, db);
            }
            Op::Scale(a, c) => {
                self.acc_scaled(grads, *a, gy.data(), *c);
            }
            Op::AddRowBias(x, bias) => {
                self.acc(grads, *x, gy.data());
                if self.requires(*bias) {
                    let n = self.value(*bias).len();
                    let mut db = vec![0.0; n];
                    for row in gy.data().chunks(n) {
                        for (d, g) in db.iter_mut().zip(row) {
                            *d += g;
                        }
                    }
                    self.acc_owned(grads, *bias, db);
                }
            }
            Op::Matmul(a, b) => {
                let k = *self.value(*a).shape().last().unwrap();
                let m = self.value(*a).len() / k;
                let n = self.value(*b).shape()[1];
                if self.requires(*a) {
                    let mut da = vec![0.0; m * k];
                    dgemm(m, n, k, 1.0, gy.data(), false, self.value(*b).data(), true, 0.0, &mut da);
                    self.acc_owned(grads, *a, da);
                }
                if self.requires(*b) {
                    let mut db = vec![0.0; k * n];
                    dgemm(k, m, n, 1.0, self.value(*a).data(), true, gy.data(), false, 0.0, &mut db);
                    self.acc_owned(grads, *b, db);
                }
            }
            Op::MatmulNT(a, b) => {
                // y = a b^T: da = gy b, db = gy^T a.
                let k = *self.value(*a).shape().last().unwrap();
                let m = self.value(*a).len() / k;
                let n = self.value(*b).shape()[0];
                if self.requires(*a) {
                    let mut da = vec![0.0; m * k];
                    dgemm(m, n, k, 1.0, gy.data(), false, self.value(*b).data(), false, 0.0, &mut da);
                    self.acc_owned(grads, *a, da);
                }
                if self.requires(*b) {
                    let mut db = vec![0.0; n * k];
                    dgemm(n, m, k, 1.0, gy.data(), true, self.value(*a).data(), false, 0.0, &mut db);
                    self.acc_owned(grads, *b, db);
                }
            }
            Op::Affine { x, w, b } => {
                let k = *self.value(*x).shape().last().unwrap();
                let m = self.value(*x).len() / k;
                let n = self.value(*w).shape()[1];
                if self.requires(*x) {
                    let mut dx = vec![0.0; m * k];
                    dgemm(m, n, k, 1.0, gy.data(), false, self.value(*w).data(), true, 0.0, &mut dx);
                    self.acc_owned(grads, *x, dx);
                }
                if self.requires(*w) {
                    let mut dw = vec![0.0; k * n];
                    dgemm(k, m, n, 1.0, self.value(*x).data(), true, gy.data(), false, 0.0, &mut dw);
                    self.acc_owned(grads, *w, dw);
                }
                if self.requires(*b) {
                    let mut db = vec![0.0; n];
                    for row in gy.data().chunks(n) {
                        for (d, g) in db.iter_mut().zip(row) {
                            *d += g;
                        }
                    }
                    self.acc_owned(grads, *b, db);
                }
            }
            Op::BatchMatmul(a, b) => {
                let ash = self.value(*a).shape();
                let (bs, m, k) = (ash[0], ash[1], ash[2]);
                let n = self.value(*b).shape()[2];
                if self.requires(*a) {
                    let mut da = vec![0.0; bs * m * k];
                    for i in 0..bs {
                        dgemm(
                            m,
                            n,
                            k,
                            1.0,
                            &gy.data()[i * m * n..(i + 1) * m * n],
                            false,
                            &self.value(*b).data()[i * k * n..(i + 1) * k * n],
                            true,
                            0.0,
                            &mut da[i * m * k..(i + 1) * m * k],
                        );
                    }
                    self.acc_owned(grads, *a, da);
                }
                if self.requires(*b) {
                    let mut db = vec![0.0; bs * k * n];
                    for i in 0..bs {
                        dgemm(
                            k,
                            m,
                            n,
                            1.0,
                            &self.value(*a).data()[i * m * k..(i + 1) * m * k],
                            true,
                            &gy.data()[i * m * n..(i + 1) * m * n],
                            false,
                            0.0,
                            &mut db[i * k * n..(i + 1) * k * n],
                        );
                    }
                    self.acc_owned(grads, *b, db);
                }
            }
            Op::Reshape(x) => {
                self.acc(grads, *x, gy.data());
            }
            Op::SplitHeads { x, batch, seq, heads } => {
                if self.requires(*x) {
                    let dk = *self.value(*x).shape().last().unwrap() / heads;
                    let mut dx = vec![0.0; self.value(*x).len()];
                    for b in 0..*batch {
                        for h in 0..*heads {
                            for s in 0..*seq {
                                let to = ((b * heads + h) * seq + s) * dk;
                                let from = (b * seq + s) * heads * dk + h * dk;
                                dx[from..from + dk]
                                    .copy_from_slice(&gy.data()[to..to + dk]);
                            }
                        }
                    }
                    self.acc_owned(grads, *x, dx);
                }
            }
            Op::MergeHeads { x, batch, seq, heads } => {
                if self.requires(*x) {
                    let dk = self.value(*x).shape()[2];
                    let mut dx = vec![0.0; self.value(*x).len()];
                    for b in 0..*batch {
                        for h in 0..*heads {
                            for s in 0..*seq {
                                let from = ((b * heads + h) * seq + s) * dk;
                                let to = (b * seq + s) * heads * dk + h * dk;
                                dx[from..from + dk].copy_from_slice(&gy.data()[to..to + dk]);
                            }
                        }
                    }
                    self.acc_owned(grads, *x, dx);
                }
            }
            Op::AttentionCore { q, k, v, probs, scale } => {
                let qs = self.value(*q).shape();
                let (bh, s, dk) = (qs[0], qs[1], qs[2]);
                let qd = self.value(*q).data();
                let kd = self.value(*k).data();
                let vd = self.value(*v).data();
                let pd = probs.data();
                let mut dq = vec![0.0; bh * s * dk];
                let mut dkk = vec![0.0; bh * s * dk];
                let mut dv = vec![0.0; bh * s * dk];
                dq.par_chunks_mut(s * dk)
                    .zip(dkk.par_chunks_mut(s * dk))
                    .zip(dv.par_chunks_mut(s * dk))
                    .enumerate()
                    .for_each(|(i, ((dq_c, dk_c), dv_c))| {
                        let qb = &qd[i * s * dk..(i + 1) * s * dk];
                        let kb = &kd[i * s * dk..(i + 1) * s * dk];
                        let vb = &vd[i * s * dk..(i + 1) * s * dk];
                        let pb = &pd[i * s * s..(i + 1) * s * s];
                        let gb = &gy.data()[i * s * dk..(i + 1) * s * dk];
                        // dV = P^T gOut
                        dgemm(s, s, dk, 1.0, pb, true, gb, false, 0.0, dv_c);
                        // dP = gOut V^T
                        let mut dp = vec![0.0; s * s];
                        dgemm(s, dk, s, 1.0, gb, false, vb, true, 0.0, &mut dp);
                        // softmax backward rowwise; masked entries have p = 0.
                        let mut ds = vec![0.0; s * s];
                        for t in 0..s {
                            let prow = &pb[t * s..(t + 1) * s];
                            let dprow = &dp[t * s..(t + 1) * s];
                            let inner: f64 =
                                prow.iter().zip(dprow).map(|(p, d)| p * d).sum();
                            let dsrow = &mut ds[t * s..(t + 1) * s];
                            for j in 0..=t {
                                dsrow[j] = prow[j] * (dprow[j] - inner);
                            }
                        }
                        // dQ = scale * dS K; dK = scale * dS^T Q
                        dgemm(s, s, dk, *scale, &ds, false, kb, false, 0.0, dq_c);
                        dgemm(s, s, dk, *scale, &ds, true, qb, false, 0.0, dk_c);
                    });
                self.acc_owned(grads, *q, dq);
                self.acc_owned(grads, *k, dkk);
                self.acc_owned(grads, *v, dv);
            }
            Op::Gelu { x, tanh_vals } => {
                let xd = self.value(*x).data();
                let gyd = gy.data();
                let mut dx = vec![0.0; xd.len()];
                dx.par_chunks_mut(1 << 14)
                    .enumerate()
                    .for_each(|(ci, chunk)| {
                        let base = ci << 14;
                        for j in 0..chunk.len() {
                            let v = xd[base + j];
                            let t = tanh_vals[base + j];
                            let sech2 = 1.0 - t * t;
                            let grad = 0.5 * (1.0 + t)
                                + 0.5 * v * sech2 * GELU_C * (1.0 + 3.0 * GELU_A * v * v);
                            chunk[j] = gyd[base + j] * grad;
                        }
                    });
                self.acc_owned(grads, *x, dx);
            }
            Op::Sigmoid(x) => {
                let dx: Vec<f64> = node
                    .value
                    .data()
                    .iter()
                    .zip(gy.data())
                    .map(|(&s, g)| g * s * (1.0 - s))
                    .collect();
                self.acc_owned(grads, *x, dx);
            }
            Op::Softplus(x) => {
                let dx: Vec<f64> = self
                    .value(*x)
                    .data()
                    .iter()
                    .zip(gy.data())
                    .map(|(&v, g)| g * sigmoid_fwd(v))
                    .collect();
                self.acc_owned(grads, *x, dx);
            }
            Op::Exp(x) => {
                let dx: Vec<f64> = node
                    .value
                    .data()
                    .iter()
                    .zip(gy.data())
                    .map(|(&e, g)| g * e)
                    .collect();
                self.acc_owned(grads, *x, dx);
            }
            Op::LayerNorm { x, gain, bias, mean, rstd } => {
                let d = *node.value.shape().last().unwrap();
                let rows = node.value.len() / d;
                let xd = self.value(*x).data();
                let g = self.value(*gain).data();
                if self.requires(*gain) {
                    let mut dg = vec![0.0; d];
                    for r in 0..rows {
                        for c in 0..d {
                            let xhat = (xd[r * d + c] - mean[r]) * rstd[r];
                            dg[c] += gy.data()[r * d + c] * xhat;
                        }
                    }
                    self.acc_owned(grads, *gain, dg);
                }
                if self.requires(*bias) {
                    let mut db = vec![0.0; d];
                    for r in 0..rows {
                        for c in 0..d {
                            db[c] += gy.data()[r * d + c];
                        }
                    }
                    self.acc_owned(grads, *bias, db);
                }
                if self.requires(*x) {
                    let mut dx = vec![0.0; xd.len()];
                    for r in 0..rows {
                        let mut mean_dxhat = 0.0;
                        let mut mean_dxhat_xhat = 0.0;
                        for c in 0..d {
                            let xhat = (xd[r * d + c] - mean[r]) * rstd[r];
                            let dxhat = gy.data()[r * d + c] * g[c];
                            mean_dxhat += dxhat;
                            mean_dxhat_xhat += dxhat * xhat;
                        }
                        mean_dxhat /= d as f64;
                        mean_dxhat_xhat /= d as f64;
                        for c in 0..d {
                            let xhat = (xd[r * d + c] - mean[r]) * rstd[r];
                            let dxhat = gy.data()[r * d + c] * g[c];
                            dx[r * d + c] =
                                rstd[r] * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat);
                        }
                    }
                    self.acc_owned(grads, *x, dx);
                }
            }
            Op::MeanAxis1(x) => {
                let xs = self.value(*x).shape();
                let (bs, s, d) = (xs[0], xs[1], xs[2]);
                let mut dx = vec![0.0; bs * s * d];
                for b in 0..bs {
                    let grow = &gy.data()[b * d..(b + 1) * d];
                    for t in 0..s {
                        let drow = &mut dx[(b * s + t) * d..(b * s + t + 1) * d];
                        for c in 0..d {
                            drow[c] = grow[c] / s as f64;
                        }
                    }
                }
                self.acc_owned(grads, *x, dx);
            }
            Op::MeanAll(x) => {
                let n = self.value(*x).len();
                let g = gy.item() / n as f64;
                let dx = vec![g; n];
                self.acc_owned(grads, *x, dx);
            }
            Op::MseLoss { pred, target } => {
                let n = target.len() as f64;
                let g = gy.item();
                let dp: Vec<f64> = self
                    .value(*pred)
                    .data()
                    .iter()
                    .zip(target.data())
                    .map(|(p, t)| g * 2.0 * (p - t) / n)
                    .collect();
                self.acc_owned(grads, *pred, dp);
            }
            Op::StreamApply { x, q, n_streams } => {
                let xs = self.value(*x).shape();
                let (bs, s, dim) = (xs[0], xs[1], xs[2]);
                let d = dim / n_streams;
                let xd = self.value(*x).data();
                let qd = self.value(*q).data();
                if self.requires(*x) {
                    let mut dx = vec![0.0; xd.len()];
                    stream_apply_kernel(gy.data(), qd, &mut dx, bs, s, *n_streams, d, true);
                    self.acc_owned(grads, *x, dx);
                }
                if self.requires(*q) {
                    let n = *n_streams;
                    let mut dq = vec![0.0; bs * n * n];
                    let gyd = gy.data();
                    dq.par_chunks_mut(n * n).enumerate().for_each(|(b, dqb)| {
                        for t in 0..s {
                            let xrow = &xd[(b * s + t) * dim..(b * s + t + 1) * dim];
                            let grow = &gyd[(b * s + t) * dim..(b * s + t + 1) * dim];
                            for i in 0..n {
                                for m in 0..n {
                                    let mut acc = 0.0;
                                    for j in 0..d {
                                        acc += grow[i * d + j] * xrow[m * d + j];
                                    }
                                    dqb[i * n + m] += acc;
                                }
                            }
                        }
                    });
                    self.acc_owned(grads, *q, dq);
                }
            }
            Op::BatchOuter(u, v) => {
                let us = self.value(*u).shape();
                let vs = self.value(*v).shape();
                let (bs, n, m) = (us[0], us[1], vs[1]);
                let ud = self.value(*u).data();
                let vd = self.value(*v).data();
                if self.requires(*u) {
                    let mut du = vec![0.0; bs * n];
                    for b in 0..bs {
                        for i in 0..n {
                            let grow = &gy.data()[(b * n + i) * m..(b * n + i + 1) * m];
                            let vrow = &vd[b * m..(b + 1) * m];
                            du[b * n + i] =
                                grow.iter().zip(vrow).map(|(g, v)| g * v).sum();
                        }
                    }
                    self.acc_owned(grads, *u, du);
                }
                if self.requires(*v) {
                    let mut dv = vec![0.0; bs * m];
                    for b in 0..bs {
                        for i in 0..n {
                            let coeff = ud[b * n + i];
                            let grow = &gy.data()[(b * n + i) * m..(b * n + i + 1) * m];
                            for j in 0..m {
                                dv[b * m + j] += coeff * grow[j];
                            }
                        }
                    }
                    self.acc_owned(grads, *v, dv);
                }
            }
            Op::BatchScale { a, s } => {
                let bs = self.value(*s).len();
                let per = self.value(*a).len() / bs;
                let ad = self.value(*a).data();
                let sd = self.value(*s).data();
                if self.requires(*a) {
                    let mut da = vec![0.0; ad.len()];
                    for b in 0..bs {
                        for i in 0..per {
                            da[b * per + i] = gy.data()[b * per + i] * sd[b];
                        }
                    }
                    self.acc_owned(grads, *a, da);
                }
                if self.requires(*s) {
                    let mut ds = vec![0.0; bs];
                    for b in 0..bs {
                        let mut acc = 0.0;
                        for i in 0..per {
                            acc += gy.data()[b * per + i] * ad[b * per + i];
                        }
                        ds[b] = acc;
                    }
                    self.acc_owned(grads, *s, ds);
                }
            }
            Op::BatchSolve { a, b } => {
                // X = A^{-1} B: dB = A^{-T} gY, dA = -dB X^T.
                let ash = self.value(*a).shape();
                let (bs, n) = (ash[0], ash[1]);
                let ad = self.value(*a).data();
                let xd = node.value.data();
                let mut da = vec![0.0; bs * n * n];
                let mut db = vec![0.0; bs * n * n];
                for i in 0..bs {
                    let am = Matrix::from_vec(n, n, ad[i * n * n..(i + 1) * n * n].to_vec())
                        .expect("finite");
                    let at = am.transpose();
                    let gm = Matrix::from_vec(n, n, gy.data()[i * n * n..(i + 1) * n * n].to_vec())
                        .expect("finite");
                    let dbm = LuFactors::new(&at)
                        .and_then(|lu| lu.solve(&gm))
                        .expect("batch_solve backward: singular transpose");
                    db[i * n * n..(i + 1) * n * n].copy_from_slice(dbm.data());
                    let xm = Matrix::from_vec(n, n, xd[i * n * n..(i + 1) * n * n].to_vec())
                        .expect("finite");
                    let dam = dbm.matmul(&xm.transpose()).scale(-1.0);
                    da[i * n * n..(i + 1) * n * n].copy_from_slice(dam.data());
                }
                if self.requires(*a) {
                    self.acc_owned(grads, *a, da);
                }
                if self.requires(*b) {
                    self.acc_owned(grads, *b, db);
                }
            }
            Op::Solve2 { a, b } => {
                let am = self.value(*a).to_matrix();
                let gm = gy.to_matrix();
                let dbm = LuFactors::new(&am.transpose())
                    .and_then(|lu| lu.solve(&gm))
                    .expect("solve2 backward: singular transpose");
                if self.requires(*b) {
                    self.acc(grads, *b, dbm.data());
                }
                if self.requires(*a) {
                    let xm = node.value.to_matrix();
                    let dam = dbm.matmul(&xm.transpose()).scale(-1.0);
                    self.acc(grads, *a, dam.data());
                }
            }
            Op::GateBlend { gamma, a, b } => {
                let bs = self.value(*gamma).len();
                let per = self.value(*a).len() / bs;
                let gd = self.value(*gamma).data();
                let ad = self.value(*a).data();
                let bd = self.value(*b).data();
                if self.requires(*a) {
                    let mut da = vec![0.0; ad.len()];
                    for i in 0..bs {
                        for j in 0..per {
                            da[i * per + j] = gy.data()[i * per + j] * gd[i];
                        }
                    }
                    self.acc_owned(grads, *a, da);
                }
                if self.requires(*b) {
                    let mut db = vec![0.0; bd.len()];
                    for i in 0..bs {
                        for j in 0..per {
                            db[i * per + j] = gy.data()[i * per + j] * (1.0 - gd[i]);
                        }
                    }
                    self.acc_owned(grads, *b, db);
                }
                if self.requires(*gamma) {
                    let mut dg = vec![0.0; bs];
                    for i in 0..bs {
                        let mut acc = 0.0;
                        for j in 0..per {
                            acc += gy.data()[i * per + j] * (ad[i * per + j] - bd[i * per + j]);
                        }
                        dg[i] = acc;
                    }
                    self.acc_owned(grads, *gamma, dg);
                }
            }
            Op::NormalizeRows(x) => {
                let shape = self.value(*x).shape();
                let (bs, n) = (shape[0], shape[1]);
                let xd = self.value(*x).data();
                let kd = node.value.data();
                let mut dx = vec![0.0; xd.len()];
                for b in 0..bs {
                    let row = &xd[b * n..(b + 1) * n];
                    let krow = &kd[b * n..(b + 1) * n];
                    let grow = &gy.data()[b * n..(b + 1) * n];
                    let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-30);
                    let kg: f64 = krow.iter().zip(grow).map(|(k, g)| k * g).sum();
                    for j in 0..n {
                        dx[b * n + j] = (grow[j] - krow[j] * kg) / norm;
                    }
                }
                self.acc_owned(grads, *x, dx);
            }
            Op::HouseholderApply { x, k, beta } => {
                let xs = self.value(*x).shape();
                let (bs, s, d) = (xs[0], xs[1], xs[2]);
                let xd = self.value(*x).data();
                let kd = self.value(*k).data();
                let betad = self.value(*beta).data();
                let mut dx = vec![0.0; xd.len()];
                let mut dk = vec![0.0; bs * d];
                let mut dbeta = vec![0.0; bs];
                for b in 0..bs {
                    let kb = &kd[b * d..(b + 1) * d];
                    let bb = betad[b];
                    for t in 0..s {
                        let row = &xd[(b * s + t) * d..(b * s + t + 1) * d];
                        let grow = &gy.data()[(b * s + t) * d..(b * s + t + 1) * d];
                        let c: f64 = kb.iter().zip(row).map(|(a, x)| a * x).sum();
                        let e: f64 = kb.iter().zip(grow).map(|(a, g)| a * g).sum();
                        for j in 0..d {
                            dx[(b * s + t) * d + j] = grow[j] - bb * e * kb[j];
                            dk[b * d + j] -= bb * (c * grow[j] + e * row[j]);
                        }
                        dbeta[b] -= c * e;
                    }
                }
                if self.requires(*x) {
                    self.acc_owned(grads, *x, dx);
                }
                if self.requires(*k) {
                    self.acc_owned(grads, *k, dk);
                }
                if self.requires(*beta) {
                    self.acc_owned(grads, *beta, dbeta);
                }
            }
            Op::AddPositional { x, pos } => {
                self.acc(grads, *x, gy.data());
                if self.requires(*pos) {
                    let ps = self.value(*pos).len();
                    let bs = self.value(*x).shape()[0];
                    let mut dp = vec![0.0; ps];
                    for b in 0..bs {
                        for (d, g) in dp.iter_mut().zip(&gy.data()[b * ps..(b + 1) * ps]) {
                            *d += g;
                        }
                    }
                    self.acc_owned(grads, *pos, dp);
                }
            }
            Op::RowNormalize(x) => {
                let shape = self.value(*x).shape();
                let (n, m) = (shape[0], shape[1]);
                let xd = self.value(*x).data();
                let yd = node.value.data();
                let mut dx = vec![0.0; xd.len()];
                for i in 0..n {
                    let s: f64 = xd[i * m..(i + 1) * m].iter().sum();
                    let inner: f64 = gy.data()[i * m..(i + 1) * m]
                        .iter()
                        .zip(&yd[i * m..(i + 1) * m])
                        .map(|(g, y)| g * y)
                        .sum();
                    for j in 0..m {
                        dx[i * m + j] = (gy.data()[i * m + j] - inner) / s;
                    }
                }
                self.acc_owned(grads, *x, dx);
            }
            Op::ColNormalize(x) => {
                let shape = self.value(*x).shape();
                let (n, m) = (shape[0], shape[1]);
                let xd = self.value(*x).data();
                let yd = node.value.data();
                let mut dx = vec![0.0; xd.len()];
                for j in 0..m {
                    let mut s = 0.0;
                    let mut inner = 0.0;
                    for i in 0..n {
                        s += xd[i * m + j];
                        inner += gy.data()[i * m + j] * yd[i * m + j];
                    }
                    for i in 0..n {
                        dx[i * m + j] = (gy.data()[i * m + j] - inner) / s;
                    }
                }
                self.acc_owned(grads, *x, dx);
            }
            Op::BroadcastBatch { m, batch } => {
                if self.requires(*m) {
                    let per = self.value(*m).len();
                    let mut dm = vec![0.0; per];
                    for b in 0..*batch {
                        for (d, g) in dm.iter_mut().zip(&gy.data()[b * per..(b + 1) * per]) {
                            *d += g;
                        }
                    }
                    self.acc_owned(grads, *m, dm);
                }
            }
            Op::SoftmaxRows(x) => {
                let shape = self.value(*x).shape();
                let (bs, n) = (shape[0], shape[1]);
                let yd = node.value.data();
                let mut dx = vec![0.0; yd.len()];
                for b in 0..bs {
                    let yrow = &yd[b * n..(b + 1) * n];
                    let grow = &gy.data()[b * n..(b + 1) * n];
                    let inner: f64 = yrow.iter().zip(grow).map(|(y, g)| y * g).sum();
                    for j in 0..n {
                        dx[b * n + j] = yrow[j] * (grow[j] - inner);
                    }
                }
                self.acc_owned(grads, *x, dx);
            }
            Op::StreamAggregate { x, w, n_streams } => {
                let xs = self.value(*x).shape();
                let (bs, s, dim) = (xs[0], xs[1], xs[2]);
                let n = *n_streams;
                let d = dim / n;
                let xd = self.value(*x).data();
                let wd = self.value(*w).data();
                if self.requires(*x) {
                    let mut dx = vec![0.0; xd.len()];
                    for b in 0..bs {
                        for t in 0..s {
                            let grow = &gy.data()[(b * s + t) * d..(b * s + t + 1) * d];
                            let drow = &mut dx[(b * s + t) * dim..(b * s + t + 1) * dim];
                            for i in 0..n {
                                let coeff = wd[b * n + i];
                                for j in 0..d {
                                    drow[i * d + j] = coeff * grow[j];
                                }
                            }
                        }
                    }
                    self.acc_owned(grads, *x, dx);
                }
                if self.requires(*w) {
                    let mut dw = vec![0.0; bs * n];
                    for b in 0..bs {
                        for t in 0..s {
                            let grow = &gy.data()[(b * s + t) * d..(b * s + t + 1) * d];
                            let xrow = &xd[(b * s + t) * dim..(b * s + t + 1) * dim];
                            for i in 0..n {
                                let mut acc = 0.0;
                                for j in 0..d {
                                    acc += grow[j] * xrow[i * d + j];
                                }
                                dw[b * n + i] += acc;
                            }
                        }
                    }
                    self.acc_owned(grads, *w, dw);
                }
            }
            Op::StreamDistribute { h, w, n_streams } => {
                let hs = self.value(*h).shape();
                let (bs, s, d) = (hs[0], hs[1], hs[2]);
                let n = *n_streams;
                let hd = self.value(*h).data();
                let wd = self.value(*w).data();
                if self.requires(*h) {
                    let mut dh = vec![0.0; hd.len()];
                    for b in 0..bs {
                        for t in 0..s {
                            let grow =
                                &gy.data()[(b * s + t) * n * d..(b * s + t + 1) * n * d];
                            let drow = &mut dh[(b * s + t) * d..(b * s + t + 1) * d];
                            for i in 0..n {
                                let coeff = wd[b * n + i];
                                for j in 0..d {
                                    drow[j] += coeff * grow[i * d + j];
                                }
                            }
                        }
                    }
                    self.acc_owned(grads, *h, dh);
                }
                if self.requires(*w) {
                    let mut dw = vec![0.0; bs * n];
                    for b in 0..bs {
                        for t in 0..s {
                            let grow =
                                &gy.data()[(b * s + t) * n * d..(b * s + t + 1) * n * d];
                            let hrow = &hd[(b * s + t) * d..(b * s + t + 1) * d];
                            for i in 0..n {
                                let mut acc = 0.0;
                                for j in 0..d {
                                    acc += grow[i * d + j] * hrow[j];
                                }
                                dw[b * n + i] += acc;
                            }
                        }
                    }
                    self.acc_owned(grads, *w, dw);
                }
            }
            Op::SkewFromLower { e, n } => {
                if self.requires(*e) {
                    let es = self.value(*e).shape();
                    let (bs, width) = (es[0], es[1]);
                    let mut de = vec![0.0; bs * width];
                    for b in 0..bs {
                        let mut idx = 0;
                        for i in 1..*n {
                            for j in 0..i {
                                de[b * width + idx] = gy.data()[b * n * n + i * n + j]
                                    - gy.data()[b * n * n + j * n + i];
                                idx += 1;
                            }
                        }
                    }
                    self.acc_owned(grads, *e, de);
                }
            }
            Op::SumScalars(terms) => {
                for &t in terms {
                    if self.requires(t) {
                        self.acc(grads, t, gy.data());
                    }
                }
            }
        }
    }

    fn acc(&self, grads: &mut [Option<Tensor>], id: VarId, contribution: &[f64]) {
        if !self.requires(id) {
            return;
        }
        match &mut grads[id.idx()] {
            Some(existing) => {
                for (e, c) in existing.data_mut().iter_mut().zip(contribution) {
                    *e += c;
                }
            }
            slot => {
                let shape = self.value(id).shape().to_vec();
                *slot = Some(Tensor::new(shape, contribution.to_vec()).unwrap());
            }
        }
    }

    /// Like `acc`, but takes ownership: an empty slot is filled without a
    /// second allocation.
    fn acc_owned(&self, grads: &mut [Option<Tensor>], id: VarId, contribution: Vec<f64>) {
        if !self.requires(id) {
            return;
        }
        match &mut grads[id.idx()] {
            Some(existing) => {
                for (e, c) in existing.data_mut().iter_mut().zip(&contribution) {
                    *e += c;
                }
            }
            slot => {
                let shape = self.value(id).shape().to_vec();
                *slot = Some(Tensor::new(shape, contribution).unwrap());
            }
        }
    }

    fn acc_scaled(&self, grads: &mut [Option<Tensor>], id: VarId, contribution: &[f64], c: f64) {
        if !self.requires(id) {
            return;
        }
        let scaled: Vec<f64> = contribution.iter().map(|v| v * c).collect();
        self.acc(grads, id, &scaled);
    }
}

/// y[b,t,i*d+j] = sum_m Q[b,i,m] x[b,t,m*d+j]; `transpose` applies Q^T.
#[allow(clippy::too_many_arguments)]
fn stream_apply_kernel(
    x: &[f64],
    q: &[f64],
    out: &mut [f64],
    bs: usize,
    s: usize,
    n: usize,
    d: usize,
    transpose: bool,
) {
    let dim = n * d;
    out.par_chunks_mut(s * dim).enumerate().for_each(|(b, ob)| {
        let qb = &q[b * n * n..(b + 1) * n * n];
        let xb = &x[b * s * dim..(b + 1) * s * dim];
        for t in 0..s {
            let xrow = &xb[t * dim..(t + 1) * dim];
            let orow = &mut ob[t * dim..(t + 1) * dim];
            for i in 0..n {
                let seg = &mut orow[i * d..(i + 1) * d];
                for m in 0..n {
                    let coeff = if transpose { qb[m * n + i] } else { qb[i * n + m] };
                    if coeff == 0.0 {
                        continue;
                    }
                    let xseg = &xrow[m * d..(m + 1) * d];
                    for j in 0..d {
                        seg[j] += coeff * xseg[j];
                    }
                }
            }
        }
    });
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.data().iter().zip(b.data()).map(|(x, y)| f(*x, *y)).collect()
}

const GELU_C: f64 = 0.7978845608028654; // sqrt(2/pi)
const GELU_A: f64 = 0.044715;

fn sigmoid_fwd(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

const LN2_HI: f64 = 0.693_147_180_369_123_816_49;
const LN2_LO: f64 = 1.908_214_929_270_587_7e-10;
const INV_LN2: f64 = 1.442_695_040_888_963_4;

/// Round-to-nearest via the 1.5 * 2^52 magic constant; the rounded integer
/// sits in the low mantissa bits, which also yields the 2^k scale factor
/// without any float-to-int cast (those block auto-vectorization).
const ROUND_MAGIC: f64 = 6_755_399_441_055_744.0;

/// Branch-free exp by range reduction plus a degree-12 Taylor tail,
/// accurate to ~1e-13 relative. Written so the surrounding loops
/// auto-vectorize; used where libm latency dominates (the GELU tanh).
#[inline]
fn fast_exp(x: f64) -> f64 {
    let x = x.clamp(-708.0, 708.0);
    let kf = x * INV_LN2 + ROUND_MAGIC;
    let k = kf - ROUND_MAGIC;
    let r = (x - k * LN2_HI) - k * LN2_LO;
    // Horner evaluation of sum r^i / i!, i = 0..=12.
    let mut p = 1.0 / 479001600.0;
    p = p * r + 1.0 / 39916800.0;
    p = p * r + 1.0 / 3628800.0;
    p = p * r + 1.0 / 362880.0;
    p = p * r + 1.0 / 40320.0;
    p = p * r + 1.0 / 5040.0;
    p = p * r + 1.0 / 720.0;
    p = p * r + 1.0 / 120.0;
    p = p * r + 1.0 / 24.0;
    p = p * r + 1.0 / 6.0;
    p = p * r + 0.5;
    p = p * r + 1.0;
    p = p * r + 1.0;
    // Low mantissa bits of kf hold k + (mantissa of the magic constant);
    // shifting by 52 leaves exactly the biased exponent k + 1023.
    let scale_bits = (kf + 1023.0).to_bits() << 52;
    p * f64::from_bits(scale_bits)
}

/// tanh through `fast_exp`; branch-free, exact at the saturated tails.
#[inline]
fn fast_tanh(u: f64) -> f64 {
    let e = fast_exp(-2.0 * u.abs());
    ((1.0 - e) / (1.0 + e)).copysign(u)
}

#[cfg(test)]
mod fast_math_tests {
    use super::*;

    #[test]
    fn fast_exp_matches_libm() {
        let mut x = -40.0;
        while x < 40.0 {
            let rel = (fast_exp(x) - x.exp()).abs() / x.exp().max(1e-300);
            assert!(rel < 1e-12, "x={x}: rel {rel}");
            x += 0.0137;
        }
        // The clamp floors deep-tail inputs at exp(-708), effectively zero.
        assert!(fast_exp(-1000.0) < 1e-300);
    }

    #[test]
    fn fast_tanh_matches_libm() {
        let mut x = -25.0;
        while x < 25.0 {
            let diff = (fast_tanh(x) - x.tanh()).abs();
            assert!(diff < 1e-12, "x={x}: diff {diff}");
            x += 0.0171;
        }
    }
}
