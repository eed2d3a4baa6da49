use crate::GeometryError;
use numkit::Matrix;

/// Householder matrix plus a note of whether the direction had to be
/// renormalized. Generator networks emit near-unit directions; failing
/// hard on a 1e-9 norm drift would poison training, so the operator
/// renormalizes silently and records that it did.
#[derive(Debug, Clone)]
pub struct HouseholderOutcome {
    pub matrix: Matrix,
    pub renormalized: bool,
}

/// `H = I - beta k k^T` for a unit direction `k`.
///
/// `H k = (1 - beta) k`, and `H` is orthogonal exactly when beta is 0 or 2;
/// in between, norms along `k` shrink by `(beta^2 - 2 beta) (k.x)^2`.
pub fn householder(k: &[f64], beta: f64) -> Result<HouseholderOutcome, GeometryError> {
    let norm = k.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm < 1e-12 {
        return Err(GeometryError::ZeroDirection(norm));
    }
    let renormalized = (norm - 1.0).abs() > 1e-12;
    let m = k.len();
    let mut h = Matrix::identity(m);
    for i in 0..m {
        let ki = k[i] / norm;
        for j in 0..m {
            let kj = k[j] / norm;
            let v = h.get(i, j) - beta * ki * kj;
            h.set(i, j, v);
        }
    }
    Ok(HouseholderOutcome {
        matrix: h,
        renormalized,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_reflection() {
        let h = householder(&[1.0, 0.0], 2.0).unwrap();
        assert!(!h.renormalized);
        assert!(h.matrix.max_abs_diff(&Matrix::diag(&[-1.0, 1.0])) < 1e-15);
        let y = h.matrix.matvec(&[3.0, 4.0]);
        assert!((y[0] + 3.0).abs() < 1e-15 && (y[1] - 4.0).abs() < 1e-15);
        let norm = (y[0] * y[0] + y[1] * y[1]).sqrt();
        assert!((norm - 5.0).abs() < 1e-15);
    }

    #[test]
    fn beta_one_shrinks_along_k() {
        // |Hx|^2 = |x|^2 + (beta^2 - 2 beta)(k.x)^2 = 1 + (1 - 2) = 0 for x = k.
        let h = householder(&[1.0, 0.0], 1.0).unwrap();
        let y = h.matrix.matvec(&[1.0, 0.0]);
        let sq: f64 = y.iter().map(|v| v * v).sum();
        assert!(sq.abs() < 1e-15);
    }

    #[test]
    fn full_reflection_negates_k() {
        let k = [0.6, 0.8];
        let h = householder(&k, 2.0).unwrap();
        let y = h.matrix.matvec(&k);
        assert!((y[0] + k[0]).abs() < 1e-12 && (y[1] + k[1]).abs() < 1e-12);
    }

    #[test]
    fn off_unit_direction_is_renormalized() {
        let h = householder(&[2.0, 0.0], 2.0).unwrap();
        assert!(h.renormalized);
        assert!(h.matrix.max_abs_diff(&Matrix::diag(&[-1.0, 1.0])) < 1e-15);
    }

    #[test]
    fn zero_direction_is_rejected() {
        assert!(matches!(
            householder(&[0.0, 1e-13], 2.0),
            Err(GeometryError::ZeroDirection(_))
        ));
    }
}
