/// Learning-rate schedule: linear warmup 0 -> 1e-3 over iterations 0..100,
/// cosine decay 1e-3 -> 1e-4 over 100..2000, constant 1e-4 afterwards.
pub const LR_PEAK: f64 = 1e-3;
pub const LR_FLOOR: f64 = 1e-4;
pub const WARMUP_ITERS: usize = 100;
pub const DECAY_END: usize = 2000;

pub fn lr_at(iter: usize) -> f64 {
    if iter <= WARMUP_ITERS {
        return LR_PEAK * iter as f64 / WARMUP_ITERS as f64;
    }
    if iter >= DECAY_END {
        return LR_FLOOR;
    }
    let progress = (iter - WARMUP_ITERS) as f64 / (DECAY_END - WARMUP_ITERS) as f64;
    LR_FLOOR + 0.5 * (LR_PEAK - LR_FLOOR) * (1.0 + (std::f64::consts::PI * progress).cos())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn anchors() {
        assert_eq!(lr_at(0), 0.0);
        assert_eq!(lr_at(100), 1e-3);
        assert!((lr_at(2000) - 1e-4).abs() < 1e-18);
        assert!((lr_at(5000) - 1e-4).abs() < 1e-18);
    }

    #[test]
    fn continuous_at_warmup_peak_and_monotone_after() {
        assert!((lr_at(100) - lr_at(101)) < 1e-5);
        let mut prev = lr_at(100);
        for i in 101..2200 {
            let cur = lr_at(i);
            assert!(cur <= prev + 1e-18, "not monotone at {i}");
            prev = cur;
        }
    }
}
