use crate::GeometryError;
use numkit::Tensor;

/// Gated blend of two already-applied operator branches:
/// `gamma * q_out + (1 - gamma) * h_out`, elementwise.
///
/// Operands live in activation space (the operators have already been
/// applied), so this works for any matching shapes. Boundary gate values
/// 0 and 1 return one branch exactly.
pub fn hybrid_blend(gamma: f64, q_out: &Tensor, h_out: &Tensor) -> Result<Tensor, GeometryError> {
    if q_out.shape() != h_out.shape() {
        return Err(GeometryError::ShapeMismatch(format!(
            "branch shapes differ: {:?} vs {:?}",
            q_out.shape(),
            h_out.shape()
        )));
    }
    let data = q_out
        .data()
        .iter()
        .zip(h_out.data())
        .map(|(q, h)| gamma * q + (1.0 - gamma) * h)
        .collect();
    Ok(Tensor::new(q_out.shape().to_vec(), data).expect("shape already validated"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(data: Vec<f64>) -> Tensor {
        Tensor::new(vec![data.len()], data).unwrap()
    }

    #[test]
    fn boundaries_return_branches_exactly() {
        let q = t(vec![1.0, -2.0, 3.0]);
        let h = t(vec![0.5, 0.5, 0.5]);
        assert_eq!(hybrid_blend(1.0, &q, &h).unwrap(), q);
        assert_eq!(hybrid_blend(0.0, &q, &h).unwrap(), h);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let q = t(vec![1.0, 2.0]);
        let h = t(vec![1.0, 2.0, 3.0]);
        assert!(matches!(
            hybrid_blend(0.5, &q, &h),
            Err(GeometryError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn midpoint_blend_of_rotation_and_reflection_is_not_orthogonal() {
        // Q = I2, H = diag(-1, 1): M = 0.5 Q + 0.5 H = diag(0, 1),
        // and |M^T M - I|_max = 1.
        use numkit::Matrix;
        let q = Matrix::identity(2);
        let h = Matrix::diag(&[-1.0, 1.0]);
        let m = q.scale(0.5).add(&h.scale(0.5));
        assert!((m.gram_deviation() - 1.0).abs() < 1e-15);
    }
}
