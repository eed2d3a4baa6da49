use crate::{Matrix, NumError};

/// Relative pivot floor: a pivot below `PIVOT_REL_TOL * max|A|` signals a
/// singular system.
const PIVOT_REL_TOL: f64 = 1e-14;

/// LU factorization with partial pivoting, PA = LU packed in one matrix.
#[derive(Debug, Clone)]
pub struct LuFactors {
    lu: Matrix,
    perm: Vec<usize>,
    /// +1 or -1 depending on permutation parity.
    sign: f64,
}

impl LuFactors {
    /// Factor a square matrix. Fails with [`NumError::SingularMatrix`] when a
    /// pivot falls below the relative floor.
    pub fn new(a: &Matrix) -> Result<Self, NumError> {
        if !a.is_square() {
            return Err(NumError::InvalidInput(format!(
                "LU needs a square matrix, got {}x{}",
                a.rows(),
                a.cols()
            )));
        }
        let n = a.rows();
        let scale = a.max_abs();
        let threshold = PIVOT_REL_TOL * if scale > 0.0 { scale } else { 1.0 };
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = 1.0;

        for col in 0..n {
            // Pick the largest-magnitude pivot in this column.
            let mut pivot_row = col;
            let mut pivot_val = lu.get(col, col).abs();
            for r in col + 1..n {
                let v = lu.get(r, col).abs();
                if v > pivot_val {
                    pivot_val = v;
                    pivot_row = r;
                }
            }
            if pivot_val < threshold {
                return Err(NumError::SingularMatrix {
                    pivot: pivot_val,
                    threshold,
                    col,
                });
            }
            if pivot_row != col {
                for j in 0..n {
                    let (a, b) = (lu.get(col, j), lu.get(pivot_row, j));
                    lu.set(col, j, b);
                    lu.set(pivot_row, j, a);
                }
                perm.swap(col, pivot_row);
                sign = -sign;
            }
            let pivot = lu.get(col, col);
            for r in col + 1..n {
                let factor = lu.get(r, col) / pivot;
                lu.set(r, col, factor);
                for j in col + 1..n {
                    let v = lu.get(r, j) - factor * lu.get(col, j);
                    lu.set(r, j, v);
                }
            }
        }
        Ok(Self { lu, perm, sign })
    }

    /// Solve A X = B for every column of B.
    pub fn solve(&self, b: &Matrix) -> Result<Matrix, NumError> {
        let n = self.lu.rows();
        if b.rows() != n {
            return Err(NumError::ShapeMismatch(format!(
                "solve rhs has {} rows, matrix has {}",
                b.rows(),
                n
            )));
        }
        let m = b.cols();
        let mut x = Matrix::zeros(n, m);
        // Apply the row permutation to B.
        for i in 0..n {
            for j in 0..m {
                x.set(i, j, b.get(self.perm[i], j));
            }
        }
        // Forward substitution with unit-diagonal L.
        for i in 1..n {
            for k in 0..i {
                let l = self.lu.get(i, k);
                if l == 0.0 {
                    continue;
                }
                for j in 0..m {
                    let v = x.get(i, j) - l * x.get(k, j);
                    x.set(i, j, v);
                }
            }
        }
        // Back substitution with U.
        for i in (0..n).rev() {
            for k in i + 1..n {
                let u = self.lu.get(i, k);
                if u == 0.0 {
                    continue;
                }
                for j in 0..m {
                    let v = x.get(i, j) - u * x.get(k, j);
                    x.set(i, j, v);
                }
            }
            let d = self.lu.get(i, i);
            for j in 0..m {
                x.set(i, j, x.get(i, j) / d);
            }
        }
        Ok(x)
    }

    /// Product of pivots with permutation sign.
    pub fn det(&self) -> f64 {
        let n = self.lu.rows();
        let mut d = self.sign;
        for i in 0..n {
            d *= self.lu.get(i, i);
        }
        d
    }
}

/// Solve A X = B by partial-pivot LU.
pub fn mat_solve(a: &Matrix, b: &Matrix) -> Result<Matrix, NumError> {
    LuFactors::new(a)?.solve(b)
}

/// Determinant by pivoted elimination. Zero is a valid return: a pivot
/// collapse simply yields 0 instead of an error.
pub fn det(a: &Matrix) -> f64 {
    assert!(a.is_square(), "determinant of a non-square matrix");
    let n = a.rows();
    let mut lu = a.clone();
    let mut sign = 1.0;
    for col in 0..n {
        let mut pivot_row = col;
        let mut pivot_val = lu.get(col, col).abs();
        for r in col + 1..n {
            let v = lu.get(r, col).abs();
            if v > pivot_val {
                pivot_val = v;
                pivot_row = r;
            }
        }
        if pivot_val == 0.0 {
            return 0.0;
        }
        if pivot_row != col {
            for j in 0..n {
                let (a0, b0) = (lu.get(col, j), lu.get(pivot_row, j));
                lu.set(col, j, b0);
                lu.set(pivot_row, j, a0);
            }
            sign = -sign;
        }
        let pivot = lu.get(col, col);
        for r in col + 1..n {
            let factor = lu.get(r, col) / pivot;
            for j in col..n {
                let v = lu.get(r, j) - factor * lu.get(col, j);
                lu.set(r, j, v);
            }
        }
    }
    let mut d = sign;
    for i in 0..n {
        d *= lu.get(i, i);
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solve_identity_returns_rhs() {
        let b = Matrix::from_rows(&[&[3.0, 4.0], &[5.0, 6.0]]);
        let x = mat_solve(&Matrix::identity(2), &b).unwrap();
        assert_eq!(x, b);
    }

    #[test]
    fn solve_two_by_two_hand_oracle() {
        // Gaussian elimination by hand: [[1,1],[-1,1]] X = I  =>  X = 0.5*[[1,-1],[1,1]]
        let a = Matrix::from_rows(&[&[1.0, 1.0], &[-1.0, 1.0]]);
        let x = mat_solve(&a, &Matrix::identity(2)).unwrap();
        let expected = Matrix::from_rows(&[&[0.5, -0.5], &[0.5, 0.5]]);
        assert!(x.max_abs_diff(&expected) < 1e-15);
    }

    #[test]
    fn solve_rank_deficient_fails() {
        let a = Matrix::from_rows(&[&[1.0, 1.0], &[1.0, 1.0]]);
        let err = mat_solve(&a, &Matrix::identity(2)).unwrap_err();
        assert!(matches!(err, NumError::SingularMatrix { .. }));
    }

    #[test]
    fn det_examples() {
        assert_eq!(det(&Matrix::identity(4)), 1.0);
        // 2x2 cofactor expansion: det([[0,-1],[1,0]]) = 0*0 - (-1)*1 = 1
        let rot = Matrix::from_rows(&[&[0.0, -1.0], &[1.0, 0.0]]);
        assert!((det(&rot) - 1.0).abs() < 1e-15);
        let refl = Matrix::diag(&[-1.0, 1.0]);
        assert!((det(&refl) + 1.0).abs() < 1e-15);
    }

    #[test]
    fn det_singular_is_zero() {
        let a = Matrix::from_rows(&[&[1.0, 2.0], &[2.0, 4.0]]);
        assert_eq!(det(&a), 0.0);
    }
}
