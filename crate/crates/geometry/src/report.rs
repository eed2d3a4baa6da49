use crate::{negation_margin, SkewGenerator};
use numkit::{det, Matrix, RandomStream};

/// Seed for the fixed probe set used by the isometry measurement.
const PROBE_SEED: u64 = 0x0b5e55ed;
const N_PROBES: usize = 16;

/// Diagnostic bundle for one operator: everything the verifier prints.
#[derive(Debug, Clone)]
pub struct OrthogonalReport {
    /// max |(Q^T Q - I)_{ij}|
    pub gram_deviation: f64,
    pub det_value: f64,
    /// max over probe vectors y of | |Qy| - |y| |
    pub isometry_deviation: f64,
    /// |det(Q + I)|; zero exactly when -1 is an eigenvalue
    pub negation_margin: f64,
    /// Planar rotation magnitude of the rank-2 generator, when one is known.
    pub mu: Option<f64>,
}

/// Measure a square operator. Probes are unit Gaussian vectors from a fixed
/// stream, so reports are reproducible run to run.
pub fn orthogonality_report(q: &Matrix, gen: Option<&SkewGenerator>) -> OrthogonalReport {
    assert!(q.is_square(), "report of a non-square operator");
    let n = q.rows();
    let mut stream = RandomStream::new(PROBE_SEED);
    let mut isometry_deviation = 0.0f64;
    for _ in 0..N_PROBES {
        let y = stream.unit_vec(n);
        let qy = q.matvec(&y);
        let norm: f64 = qy.iter().map(|v| v * v).sum::<f64>().sqrt();
        isometry_deviation = isometry_deviation.max((norm - 1.0).abs());
    }
    OrthogonalReport {
        gram_deviation: q.gram_deviation(),
        det_value: det(q),
        isometry_deviation,
        negation_margin: negation_margin(q),
        mu: gen.map(SkewGenerator::mu),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cayley;

    #[test]
    fn cayley_output_reports_clean() {
        let gen = SkewGenerator::new(vec![0.5, -1.0, 2.0, 0.1], vec![1.0, 0.3, -0.7, 0.9]);
        let q = cayley(&gen, 3.7);
        let report = orthogonality_report(&q, Some(&gen));
        assert!(report.gram_deviation <= 1e-10);
        assert!((report.det_value - 1.0).abs() <= 1e-8);
        assert!(report.isometry_deviation <= 1e-10);
        assert!(report.negation_margin > 0.0);
    }

    #[test]
    fn mu_from_generator() {
        let gen = SkewGenerator::new(vec![1.0, 0.0], vec![0.0, 1.0]);
        let report = orthogonality_report(&Matrix::identity(2), Some(&gen));
        assert!((report.mu.unwrap() - 1.0).abs() < 1e-15);

        let degenerate = SkewGenerator::new(vec![1.0, 0.0], vec![2.0, 0.0]);
        let report = orthogonality_report(&Matrix::identity(2), Some(&degenerate));
        assert!(report.mu.unwrap() < 1e-12);
    }
}
