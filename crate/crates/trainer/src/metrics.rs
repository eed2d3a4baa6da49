use models::Model;
use numkit::Tensor;

/// Per-position output norms of a model driven by a stability-style echo
/// input, positions 0..=positions.
pub fn norm_profile(model: &Model, echo_input: &Tensor, positions: usize) -> Vec<f64> {
    assert!(echo_input.shape()[1] > positions, "sequence too short");
    let d = echo_input.shape()[2];
    let (pred, _) = model.predict(echo_input);
    (0..=positions)
        .map(|t| {
            let row = &pred.data()[t * d..(t + 1) * d];
            row.iter().map(|v| v * v).sum::<f64>().sqrt()
        })
        .collect()
}

/// Mean over positions 1..=positions of | |y_t| - 1 | for an echo input
/// whose targets are unit vectors at every position.
pub fn norm_deviation(model: &Model, echo_input: &Tensor, positions: usize) -> f64 {
    let profile = norm_profile(model, echo_input, positions);
    profile[1..]
        .iter()
        .map(|n| (n - 1.0).abs())
        .sum::<f64>()
        / positions as f64
}

/// Mean cosine similarity between prediction and target rows. Zero-norm
/// rows are skipped; the skip count is reported alongside the mean.
pub fn cosine_alignment(preds: &Tensor, targets: &Tensor) -> (f64, usize) {
    assert_eq!(preds.shape(), targets.shape(), "alignment shape mismatch");
    let d = *preds.shape().last().unwrap();
    let rows = preds.len() / d;
    let mut total = 0.0;
    let mut used = 0usize;
    let mut skipped = 0usize;
    for r in 0..rows {
        let p = &preds.data()[r * d..(r + 1) * d];
        let t = &targets.data()[r * d..(r + 1) * d];
        let np: f64 = p.iter().map(|v| v * v).sum::<f64>().sqrt();
        let nt: f64 = t.iter().map(|v| v * v).sum::<f64>().sqrt();
        if np < 1e-12 || nt < 1e-12 {
            skipped += 1;
            continue;
        }
        let dot: f64 = p.iter().zip(t).map(|(a, b)| a * b).sum();
        total += dot / (np * nt);
        used += 1;
    }
    let mean = if used == 0 { 0.0 } else { total / used as f64 };
    (mean, skipped)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alignment_anchors() {
        let x = Tensor::new(vec![2, 3], vec![1.0, 0.0, 0.0, 0.0, 2.0, 0.0]).unwrap();
        let neg = Tensor::new(vec![2, 3], vec![-1.0, 0.0, 0.0, 0.0, -2.0, 0.0]).unwrap();
        let (a, skipped) = cosine_alignment(&neg, &neg);
        assert_eq!((a, skipped), (1.0, 0));
        let (a, _) = cosine_alignment(&x, &neg);
        assert_eq!(a, -1.0);
    }

    #[test]
    fn zero_rows_are_skipped_and_counted() {
        let p = Tensor::new(vec![2, 2], vec![0.0, 0.0, 1.0, 0.0]).unwrap();
        let t = Tensor::new(vec![2, 2], vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        let (a, skipped) = cosine_alignment(&p, &t);
        assert_eq!(skipped, 1);
        assert_eq!(a, 1.0);
    }
}
