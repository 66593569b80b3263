//! Standard normal and logistic helpers with tail-stable formulas.

use statrs::function::erf::{erfc, erfc_inv};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal density.
pub fn norm_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal quantile.
pub fn norm_quantile(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
}

/// Logistic function 1 / (1 + e^-x) without overflow for large |x|.
pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Two-sided Wald p-value for estimate / se.
pub fn wald_p_value(estimate: f64, se: f64) -> f64 {
    if se.is_nan() || se <= 0.0 {
        return f64::NAN;
    }
    2.0 * norm_cdf(-(estimate / se).abs())
}
