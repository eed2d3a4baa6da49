use numkit::Matrix;

/// Rank-2 skew-symmetric generator built from a pair of vectors.
///
/// `A = u v^T - v u^T` is assembled entry-by-entry above the diagonal and
/// mirrored with an exact negation, so `A^T = -A` holds to the bit, not to
/// a tolerance.
#[derive(Debug, Clone)]
pub struct SkewGenerator {
    u: Vec<f64>,
    v: Vec<f64>,
    a: Matrix,
}

impl SkewGenerator {
    pub fn new(u: Vec<f64>, v: Vec<f64>) -> Self {
        assert_eq!(u.len(), v.len(), "generator vectors must match in length");
        let n = u.len();
        let mut a = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i + 1..n {
                let val = u[i] * v[j] - v[i] * u[j];
                a.set(i, j, val);
                a.set(j, i, -val);
            }
        }
        Self { u, v, a }
    }

    pub fn dim(&self) -> usize {
        self.u.len()
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn matrix(&self) -> &Matrix {
        &self.a
    }

    /// Planar rotation magnitude: the nonzero eigenvalues of `A` are
    /// `+/- i mu` with `mu = sqrt(|u|^2 |v|^2 - (u.v)^2)` (the area of the
    /// parallelogram spanned by u and v).
    pub fn mu(&self) -> f64 {
        let uu: f64 = self.u.iter().map(|x| x * x).sum();
        let vv: f64 = self.v.iter().map(|x| x * x).sum();
        let uv: f64 = self.u.iter().zip(&self.v).map(|(a, b)| a * b).sum();
        (uu * vv - uv * uv).max(0.0).sqrt()
    }
}
