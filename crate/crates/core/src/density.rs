//! Log-space normal densities and log-sum-exp.

/// `ln(2 pi)`
pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Log density of `N(mean, var)` at `x`.
#[inline]
pub fn ln_normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (LN_2PI + var.ln() + d * d / var)
}

/// `ln(sum(exp(v)))`, shifted by the maximum. Returns `-inf` when every entry is `-inf`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max.is_nan() {
        return max;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = values.iter().map(|&v| (v - max).exp()).sum();
    max + sum.ln()
}

/// `ln(exp(x) + exp(y))`.
#[inline]
pub fn log_add_exp(x: f64, y: f64) -> f64 {
    let (hi, lo) = if x >= y { (x, y) } else { (y, x) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_normal_at_zero() {
        let expected = -(2.0 * std::f64::consts::PI).sqrt().ln();
        assert!((ln_normal_pdf(0.0, 0.0, 1.0) - expected).abs() < 1e-15);
    }

    #[test]
    fn lse_survives_extreme_offsets() {
        let v = [-1000.0, -1000.0 + 2f64.ln()];
        assert!((log_sum_exp(&v) - (-1000.0 + 3f64.ln())).abs() < 1e-12);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY; 3]), f64::NEG_INFINITY);
        assert!((log_add_exp(-800.0, -800.0) - (-800.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(log_add_exp(1.5, f64::NEG_INFINITY), 1.5);
    }
}
