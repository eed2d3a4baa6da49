use crate::{Matrix, NumError};

/// Entries at or below zero are raised to this floor before normalizing.
pub const SINKHORN_CLAMP_FLOOR: f64 = 1e-9;

/// Sinkhorn-Knopp projection toward the doubly stochastic set: alternate
/// row and column normalization `iters` times (row first, column second,
/// so columns sum to exactly 1 on return).
///
/// Nonpositive entries are clamped to [`SINKHORN_CLAMP_FLOOR`] first; the
/// iteration preserves positivity from there.
pub fn sinkhorn_project(m: &Matrix, iters: usize) -> Result<Matrix, NumError> {
    if m.rows() == 0 || m.cols() == 0 {
        return Err(NumError::InvalidInput("sinkhorn of an empty matrix".into()));
    }
    if !m.is_square() {
        return Err(NumError::InvalidInput(format!(
            "sinkhorn needs a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    let n = m.rows();
    let mut out = m.clone();
    for v in out.data_mut() {
        if *v < SINKHORN_CLAMP_FLOOR {
            *v = SINKHORN_CLAMP_FLOOR;
        }
    }
    for _ in 0..iters {
        for i in 0..n {
            let s: f64 = (0..n).map(|j| out.get(i, j)).sum();
            for j in 0..n {
                out.set(i, j, out.get(i, j) / s);
            }
        }
        for j in 0..n {
            let s: f64 = (0..n).map(|i| out.get(i, j)).sum();
            for i in 0..n {
                out.set(i, j, out.get(i, j) / s);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_dominance_approaches_identity() {
        let m = Matrix::from_rows(&[&[2.0, 0.0], &[0.0, 2.0]]);
        let p = sinkhorn_project(&m, 20).unwrap();
        assert!(p.max_abs_diff(&Matrix::identity(2)) < 1e-6);
    }

    #[test]
    fn all_ones_becomes_uniform() {
        let m = Matrix::from_rows(&[&[1.0, 1.0], &[1.0, 1.0]]);
        let p = sinkhorn_project(&m, 5).unwrap();
        let uniform = Matrix::from_rows(&[&[0.5, 0.5], &[0.5, 0.5]]);
        assert!(p.max_abs_diff(&uniform) < 1e-12);
    }

    #[test]
    fn row_and_col_sums_converge() {
        // The iteration itself is the oracle here; assert only the sums.
        let m = Matrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
        let p = sinkhorn_project(&m, 20).unwrap();
        for i in 0..2 {
            let rs: f64 = (0..2).map(|j| p.get(i, j)).sum();
            let cs: f64 = (0..2).map(|j| p.get(j, i)).sum();
            assert!((rs - 1.0).abs() < 1e-6, "row sum {rs}");
            assert!((cs - 1.0).abs() < 1e-6, "col sum {cs}");
        }
    }

    #[test]
    fn empty_is_invalid() {
        let m = Matrix::zeros(0, 0);
        assert!(matches!(
            sinkhorn_project(&m, 1),
            Err(NumError::InvalidInput(_))
        ));
    }

    #[test]
    fn idempotent_to_tolerance() {
        // Convergence is linear, so give the first projection enough
        // iterations to land well inside the fixed point.
        let m = Matrix::from_rows(&[&[1.0, 2.0, 0.5], &[3.0, 4.0, 1.0], &[0.2, 0.1, 5.0]]);
        let once = sinkhorn_project(&m, 200).unwrap();
        let twice = sinkhorn_project(&once, 200).unwrap();
        assert!(once.max_abs_diff(&twice) < 1e-9);
        assert!(once.data().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn nonpositive_entries_are_clamped() {
        let m = Matrix::from_rows(&[&[2.0, -1.0], &[0.0, 2.0]]);
        let p = sinkhorn_project(&m, 20).unwrap();
        assert!(p.data().iter().all(|&v| v > 0.0));
        assert!(p.max_abs_diff(&Matrix::identity(2)) < 1e-6);
    }
}
