use crate::GeometryError;
use numkit::Matrix;

/// Rotation by `theta` in the coordinate plane `(i, j)`, identity on the
/// complement:
/// `R = I + (cos t - 1)(e_i e_i^T + e_j e_j^T) + sin t (e_i e_j^T - e_j e_i^T)`.
pub fn rotation_plane(d: usize, i: usize, j: usize, theta: f64) -> Result<Matrix, GeometryError> {
    if !(i < j && j < d) {
        return Err(GeometryError::IndexError(format!(
            "plane indices must satisfy i < j < d, got i={i}, j={j}, d={d}"
        )));
    }
    let (c, s) = (theta.cos(), theta.sin());
    let mut r = Matrix::identity(d);
    r.set(i, i, c);
    r.set(j, j, c);
    r.set(i, j, s);
    r.set(j, i, -s);
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use numkit::det;

    #[test]
    fn half_turn_negates_the_plane() {
        let r = rotation_plane(4, 0, 1, std::f64::consts::PI).unwrap();
        let expected = Matrix::diag(&[-1.0, -1.0, 1.0, 1.0]);
        assert!(r.max_abs_diff(&expected) < 1e-15);
    }

    #[test]
    fn quarter_turn_formula() {
        let r = rotation_plane(2, 0, 1, std::f64::consts::FRAC_PI_2).unwrap();
        let expected = Matrix::from_rows(&[&[0.0, 1.0], &[-1.0, 0.0]]);
        assert!(r.max_abs_diff(&expected) < 1e-15);
    }

    #[test]
    fn zero_angle_is_identity() {
        let r = rotation_plane(5, 1, 3, 0.0).unwrap();
        assert!(r.max_abs_diff(&Matrix::identity(5)) < 1e-15);
    }

    #[test]
    fn orthogonal_with_unit_determinant() {
        let r = rotation_plane(6, 2, 4, 1.234).unwrap();
        assert!(r.gram_deviation() < 1e-15);
        assert!((det(&r) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bad_indices_are_rejected() {
        assert!(rotation_plane(4, 2, 2, 1.0).is_err());
        assert!(rotation_plane(4, 3, 1, 1.0).is_err());
        assert!(rotation_plane(4, 0, 4, 1.0).is_err());
    }
}
