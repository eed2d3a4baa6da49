use crate::GeometryError;

/// Gate-polarization penalty families. All are symmetric about 0.5, so
/// every smooth member has zero gradient exactly at the midpoint; they
/// differ in boundary gradient strength.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateVariant {
    /// `4 g (1 - g)`: value 1 at the midpoint, the strongest finite
    /// boundary gradient (|f'| = 4) among the smooth options.
    Product,
    /// Binary entropy: infinite boundary gradient.
    Entropy,
    /// `(g (1 - g))^2`: vanishing boundary gradient.
    ProductSq,
    /// `min(g^2, (1-g)^2)`: kinked at the midpoint (derivative undefined
    /// there; reported as NaN).
    MinDist,
}

impl GateVariant {
    pub fn name(self) -> &'static str {
        match self {
            GateVariant::Product => "product",
            GateVariant::Entropy => "entropy",
            GateVariant::ProductSq => "product_sq",
            GateVariant::MinDist => "min_dist",
        }
    }
}

/// Penalty value and gradient at a gate position: `(lambda * f(g), lambda * f'(g))`.
pub fn gate_penalty(
    gamma: f64,
    lambda: f64,
    variant: GateVariant,
) -> Result<(f64, f64), GeometryError> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(GeometryError::DomainError(format!(
            "gamma {gamma} outside [0, 1]"
        )));
    }
    if !(lambda >= 0.0) {
        return Err(GeometryError::DomainError(format!(
            "lambda {lambda} must be nonnegative"
        )));
    }
    let (value, grad) = match variant {
        GateVariant::Product => (4.0 * gamma * (1.0 - gamma), 4.0 - 8.0 * gamma),
        GateVariant::Entropy => {
            let xlnx = |x: f64| if x == 0.0 { 0.0 } else { x * x.ln() };
            let value = -xlnx(gamma) - xlnx(1.0 - gamma);
            let grad = if gamma == 0.0 {
                f64::INFINITY
            } else if gamma == 1.0 {
                f64::NEG_INFINITY
            } else {
                ((1.0 - gamma) / gamma).ln()
            };
            (value, grad)
        }
        GateVariant::ProductSq => {
            let p = gamma * (1.0 - gamma);
            (p * p, 2.0 * p * (1.0 - 2.0 * gamma))
        }
        GateVariant::MinDist => {
            let value = (gamma * gamma).min((1.0 - gamma) * (1.0 - gamma));
            let grad = if gamma < 0.5 {
                2.0 * gamma
            } else if gamma > 0.5 {
                -2.0 * (1.0 - gamma)
            } else {
                f64::NAN
            };
            (value, grad)
        }
    };
    Ok((lambda * value, lambda * grad))
}
