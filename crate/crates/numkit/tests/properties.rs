use numkit::{det, mat_solve, sinkhorn_project, Matrix, RandomStream};
use proptest::prelude::*;

/// Product of random Givens rotations: exactly orthogonal by construction,
/// used to manufacture well-conditioned test systems without depending on
/// any solver.
fn random_orthogonal(n: usize, stream: &mut RandomStream) -> Matrix {
    let mut q = Matrix::identity(n);
    for _ in 0..3 * n {
        let i = stream.next_index(n);
        let mut j = stream.next_index(n);
        while j == i {
            j = stream.next_index(n);
        }
        let theta = stream.next_f64() * std::f64::consts::TAU;
        let (c, s) = (theta.cos(), theta.sin());
        let mut g = Matrix::identity(n);
        g.set(i, i, c);
        g.set(j, j, c);
        g.set(i, j, s);
        g.set(j, i, -s);
        q = g.matmul(&q);
    }
    q
}

/// A = Q1 D Q2^T with singular values in [0.1, 10]: condition number <= 100.
fn well_conditioned(n: usize, stream: &mut RandomStream) -> Matrix {
    let q1 = random_orthogonal(n, stream);
    let q2 = random_orthogonal(n, stream);
    let d: Vec<f64> = (0..n).map(|_| 0.1 + 9.9 * stream.next_f64()).collect();
    q1.matmul(&Matrix::diag(&d)).matmul(&q2.transpose())
}

#[test]
fn solve_then_multiply_residual() {
    let mut stream = RandomStream::new(0x50_1f3e);
    for trial in 0..500 {
        let n = 2 + stream.next_index(7);
        let a = well_conditioned(n, &mut stream);
        let b = Matrix::from_fn(n, n, |_, _| stream.next_gauss() * 2.0);
        let x = mat_solve(&a, &b).unwrap();
        let residual = a.matmul(&x).max_abs_diff(&b);
        let scale = b.max_abs().max(1e-30);
        assert!(
            residual <= 1e-10 * scale,
            "trial {trial}: residual {residual:.3e} vs scale {scale:.3e}"
        );
    }
}

#[test]
fn random_stream_streams_are_reproducible() {
    let mut a = RandomStream::new(123);
    let mut b = RandomStream::new(123);
    let xs: Vec<f64> = (0..10_000).map(|_| a.next_f64()).collect();
    let ys: Vec<f64> = (0..10_000).map(|_| b.next_f64()).collect();
    assert_eq!(xs, ys);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn det_is_multiplicative(seed in any::<u64>()) {
        let mut stream = RandomStream::new(seed);
        let a = Matrix::from_fn(3, 3, |_, _| stream.next_gauss());
        let b = Matrix::from_fn(3, 3, |_, _| stream.next_gauss());
        let lhs = det(&a.matmul(&b));
        let rhs = det(&a) * det(&b);
        let scale = lhs.abs().max(rhs.abs()).max(1.0);
        prop_assert!((lhs - rhs).abs() <= 1e-9 * scale);
    }

    #[test]
    fn sinkhorn_outputs_row_col_stochastic(seed in any::<u64>()) {
        let mut stream = RandomStream::new(seed);
        let n = 2 + stream.next_index(5);
        // Mild entry ratios keep the iteration well-conditioned, which the
        // 20-iteration sum bound presumes.
        let m = Matrix::from_fn(n, n, |_, _| 0.5 + stream.next_f64() * 1.5);
        let p = sinkhorn_project(&m, 20).unwrap();
        prop_assert!(p.data().iter().all(|&v| v >= 0.0));
        for i in 0..n {
            let rs: f64 = (0..n).map(|c| p.get(i, c)).sum();
            let cs: f64 = (0..n).map(|r| p.get(r, i)).sum();
            prop_assert!((rs - 1.0).abs() < 1e-6, "row sum {}", rs);
            prop_assert!((cs - 1.0).abs() < 1e-12, "column sum {}", cs);
        }
        // Idempotency holds once the iteration has converged.
        let fixed = sinkhorn_project(&m, 200).unwrap();
        let twice = sinkhorn_project(&fixed, 200).unwrap();
        prop_assert!(fixed.max_abs_diff(&twice) <= 1e-9);
    }
}
