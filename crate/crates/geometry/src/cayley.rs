use crate::{GeometryError, SkewGenerator};
use numkit::{det, mat_solve, Matrix};

/// Cayley map of a skew-symmetric matrix: `(I + M)^{-1} (I - M)`.
///
/// `I + M` has eigenvalues `1 + i mu_k` with modulus at least 1, so the
/// solve cannot encounter a singular system for finite skew input.
pub fn cayley_map(m: &Matrix) -> Matrix {
    assert!(m.is_square(), "cayley of a non-square matrix");
    let identity = Matrix::identity(m.rows());
    let plus = identity.add(m);
    let minus = identity.sub(m);
    mat_solve(&plus, &minus)
        .expect("I + M is provably invertible for skew M; singularity means the input is not skew")
}

/// Data-dependent Cayley rotation `Q = (I + (b/2)A)^{-1} (I - (b/2)A)`.
/// Orthogonal with det +1 for every finite `beta`, with no constraint on
/// its sign or magnitude.
pub fn cayley(gen: &SkewGenerator, beta: f64) -> Matrix {
    assert!(beta.is_finite(), "beta must be finite");
    cayley_map(&gen.matrix().scale(beta / 2.0))
}

/// Rotation angle produced by the Cayley map in the generator's plane:
/// `theta = -2 atan(beta mu / 2)`, always strictly inside (-pi, pi).
pub fn cayley_angle(beta: f64, mu: f64) -> f64 {
    -2.0 * (beta * mu / 2.0).atan()
}

/// `|det(Q + I)|`: zero exactly when -1 is an eigenvalue of `Q`, strictly
/// positive for every Cayley rotation with finite parameters.
pub fn negation_margin(q: &Matrix) -> f64 {
    assert!(q.is_square(), "negation margin of a non-square matrix");
    det(&q.add(&Matrix::identity(q.rows()))).abs()
}

/// Fixed-point Cayley retraction: `Y_0 = X`, then
/// `Y_{t+1} = X + (alpha/2) A (X + Y_t)` for `steps` iterations.
///
/// Converges (for `|alpha A / 2| < 1`) to the exact solution of
/// `(I - (alpha/2)A) Y = (I + (alpha/2)A) X`, i.e. the inverse Cayley map
/// applied to X, so few steps give an approximately orthogonal update.
pub fn iterative_cayley_retraction(
    a: &Matrix,
    alpha: f64,
    steps: usize,
    x: &Matrix,
) -> Result<Matrix, GeometryError> {
    if !a.is_square() {
        return Err(GeometryError::InvalidInput(format!(
            "A must be square, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    let scale = a.max_abs().max(1.0);
    let skew_defect = a.add(&a.transpose()).max_abs();
    if skew_defect > 1e-12 * scale {
        return Err(GeometryError::InvalidInput(format!(
            "A is not skew-symmetric: |A + A^T| = {skew_defect:.3e}"
        )));
    }
    if !(alpha > 0.0) {
        return Err(GeometryError::InvalidInput(format!(
            "alpha must be positive, got {alpha}"
        )));
    }
    if steps == 0 {
        return Err(GeometryError::InvalidInput("steps must be >= 1".into()));
    }
    if x.rows() != a.rows() {
        return Err(GeometryError::ShapeMismatch(format!(
            "X has {} rows, A is {}x{}",
            x.rows(),
            a.rows(),
            a.cols()
        )));
    }
    let half = a.scale(alpha / 2.0);
    let mut y = x.clone();
    for _ in 0..steps {
        y = x.add(&half.matmul(&x.add(&y)));
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use numkit::RandomStream;

    #[test]
    fn parallel_vectors_give_identity() {
        let gen = SkewGenerator::new(vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0]);
        let q = cayley(&gen, 5.0);
        assert!(q.max_abs_diff(&Matrix::identity(3)) < 1e-15);
    }

    #[test]
    fn two_by_two_hand_oracle() {
        // u=e1, v=e2, beta=2: M = A = [[0,1],[-1,0]],
        // (I+M) = [[1,1],[-1,1]], (I-M) = [[1,-1],[1,1]],
        // Q = 0.5*[[1,-1],[1,1]] * [[1,-1],[1,1]] = [[0,-1],[1,0]].
        let gen = SkewGenerator::new(vec![1.0, 0.0], vec![0.0, 1.0]);
        let q = cayley(&gen, 2.0);
        let expected = Matrix::from_rows(&[&[0.0, -1.0], &[1.0, 0.0]]);
        assert!(q.max_abs_diff(&expected) < 1e-15);
    }

    #[test]
    fn orthogonal_for_wild_beta() {
        let mut stream = RandomStream::new(99);
        for &n in &[2usize, 4, 8] {
            for _ in 0..50 {
                let gen = SkewGenerator::new(stream.gauss_vec(n, 1.0), stream.gauss_vec(n, 1.0));
                let beta = stream.next_f64() * 1e3;
                let q = cayley(&gen, beta);
                assert!(q.gram_deviation() <= 1e-10);
            }
        }
    }

    #[test]
    fn angle_anchors() {
        assert_eq!(cayley_angle(0.0, 1.0), 0.0);
        assert!((cayley_angle(2.0, 1.0) + std::f64::consts::FRAC_PI_2).abs() < 1e-15);
        let theta = cayley_angle(1e6, 1.0);
        assert!(theta.abs() < std::f64::consts::PI);
        assert!((theta.abs() - std::f64::consts::PI).abs() < 1e-5);
    }

    #[test]
    fn negation_margin_anchors() {
        assert!((negation_margin(&Matrix::identity(2)) - 4.0).abs() < 1e-12);
        let quarter_turn = Matrix::from_rows(&[&[0.0, -1.0], &[1.0, 0.0]]);
        assert!((negation_margin(&quarter_turn) - 2.0).abs() < 1e-12);
        let reflection = Matrix::diag(&[-1.0, 1.0]);
        assert!(negation_margin(&reflection) < 1e-15);
    }

    #[test]
    fn retraction_zero_generator_is_identity_map() {
        let a = Matrix::zeros(3, 3);
        let x = Matrix::from_rows(&[&[1.0, 2.0, 0.0], &[0.0, 1.0, 1.0], &[2.0, 0.0, 1.0]]);
        let y = iterative_cayley_retraction(&a, 0.1, 2, &x).unwrap();
        assert!(y.max_abs_diff(&x) < 1e-15);
    }

    #[test]
    fn retraction_rejects_non_skew() {
        let a = Matrix::from_rows(&[&[0.0, 1.0], &[1.0, 0.0]]);
        assert!(matches!(
            iterative_cayley_retraction(&a, 0.1, 2, &Matrix::identity(2)),
            Err(GeometryError::InvalidInput(_))
        ));
    }

    #[test]
    fn retraction_converges_to_exact_cayley() {
        let mut stream = RandomStream::new(4);
        let gen = SkewGenerator::new(stream.gauss_vec(4, 1.0), stream.gauss_vec(4, 1.0));
        let a = gen.matrix().scale(1.0 / gen.matrix().frobenius_norm());
        let alpha = 0.1;
        let y = iterative_cayley_retraction(&a, alpha, 50, &Matrix::identity(4)).unwrap();
        // Fixed point: (I - (alpha/2)A) Y = (I + (alpha/2)A).
        let half = a.scale(alpha / 2.0);
        let identity = Matrix::identity(4);
        let exact = mat_solve(&identity.sub(&half), &identity.add(&half)).unwrap();
        assert!(y.max_abs_diff(&exact) < 1e-6);
    }
}
