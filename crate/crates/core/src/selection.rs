//! t-type selection functions: the probability that a study is published
//! given its Wald statistic.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::EstimationError;
use crate::normal::{expit, norm_cdf, norm_pdf};

/// Lower clamp applied to every publication probability before inversion.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    /// `2 e^x / (1 + e^x)` with `x = -beta {1 - Phi(t)}`.
    Logistic1,
    /// As [`Family::Logistic1`] with `beta` scaled by the study's standard error.
    #[serde(rename = "mlogistic1")]
    ModLogistic1,
    /// `Phi(beta0 + beta1 t)`.
    Probit2,
    /// `expit(beta0 + beta1 t)`.
    Logistic2,
}

impl Family {
    pub const ALL: [Family; 4] = [
        Family::Logistic1,
        Family::ModLogistic1,
        Family::Probit2,
        Family::Logistic2,
    ];

    pub fn arity(self) -> usize {
        match self {
            Family::Logistic1 | Family::ModLogistic1 => 1,
            Family::Probit2 | Family::Logistic2 => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::Logistic1 => "logistic1",
            Family::ModLogistic1 => "mlogistic1",
            Family::Probit2 => "probit2",
            Family::Logistic2 => "logistic2",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| format!("unknown selection family {s:?}"))
    }
}

/// Sign convention for the test statistic fed to the selection function.
///
/// `Natural` uses `t = y / se`; `Reversed` uses `t = -y / se`, which is the
/// right choice when negative effects are the favourable direction and the
/// one-sided p-value `1 - Phi(t)` should be small for beneficial results.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    #[default]
    Natural,
    Reversed,
}

impl Orientation {
    pub fn sign(self) -> f64 {
        match self {
            Orientation::Natural => 1.0,
            Orientation::Reversed => -1.0,
        }
    }
}

impl FromStr for Orientation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "natural" => Ok(Orientation::Natural),
            "reversed" => Ok(Orientation::Reversed),
            _ => Err(format!("unknown orientation {s:?} (natural|reversed)")),
        }
    }
}

impl fmt::Display for Orientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Orientation::Natural => "natural",
            Orientation::Reversed => "reversed",
        })
    }
}

/// A selection family together with its parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionModel {
    pub family: Family,
    pub beta: Vec<f64>,
    #[serde(default)]
    pub orientation: Orientation,
}

impl SelectionModel {
    pub fn new(family: Family, beta: Vec<f64>) -> Result<Self, EstimationError> {
        Self::with_orientation(family, beta, Orientation::Natural)
    }

    pub fn with_orientation(
        family: Family,
        beta: Vec<f64>,
        orientation: Orientation,
    ) -> Result<Self, EstimationError> {
        if beta.len() != family.arity() {
            return Err(EstimationError::Arity {
                family: family.name(),
                expected: family.arity(),
                got: beta.len(),
            });
        }
        if let Some(b) = beta.iter().find(|b| !b.is_finite()) {
            return Err(EstimationError::InvalidConfig(format!(
                "selection parameter must be finite, got {b}"
            )));
        }
        Ok(Self {
            family,
            beta,
            orientation,
        })
    }

    /// Same family and orientation at a different parameter value.
    pub(crate) fn at(&self, beta: &[f64]) -> SelectionModel {
        SelectionModel {
            family: self.family,
            beta: beta.to_vec(),
            orientation: self.orientation,
        }
    }

    /// The oriented statistic `t = +/- y / se`.
    pub fn t_stat(&self, effect: f64, se: f64) -> f64 {
        self.orientation.sign() * effect / se
    }

    /// Publication probability for the oriented statistic `t`.
    pub fn prob(&self, t: f64, sigma: f64) -> f64 {
        self.raw_prob(t, sigma).clamp(PROB_FLOOR, 1.0)
    }

    /// Publication probability for a study with estimate `(effect, se)`.
    pub fn prob_for(&self, effect: f64, se: f64) -> f64 {
        self.prob(self.t_stat(effect, se), se)
    }

    fn raw_prob(&self, t: f64, sigma: f64) -> f64 {
        let b = &self.beta;
        match self.family {
            Family::Logistic1 => 2.0 * expit(-b[0] * norm_cdf(-t)),
            Family::ModLogistic1 => 2.0 * expit(-b[0] * sigma * norm_cdf(-t)),
            Family::Probit2 => norm_cdf(b[0] + b[1] * t),
            Family::Logistic2 => expit(b[0] + b[1] * t),
        }
    }

    /// Gradient of [`SelectionModel::prob`] with respect to beta.
    ///
    /// Where the clamp is active the probability is locally constant and the
    /// gradient is zero. At the one-parameter kink `beta = 0` (raw value exactly
    /// 1) the right derivative is returned.
    pub fn dprob_dbeta(&self, t: f64, sigma: f64) -> Vec<f64> {
        let raw = self.raw_prob(t, sigma);
        if !(PROB_FLOOR..=1.0).contains(&raw) {
            return vec![0.0; self.beta.len()];
        }
        let b = &self.beta;
        match self.family {
            Family::Logistic1 | Family::ModLogistic1 => {
                let scale = match self.family {
                    Family::ModLogistic1 => sigma,
                    _ => 1.0,
                };
                let c = scale * norm_cdf(-t);
                let s = expit(-b[0] * c);
                vec![-2.0 * s * (1.0 - s) * c]
            }
            Family::Probit2 => {
                let d = norm_pdf(b[0] + b[1] * t);
                vec![d, d * t]
            }
            Family::Logistic2 => {
                let s = expit(b[0] + b[1] * t);
                let d = s * (1.0 - s);
                vec![d, d * t]
            }
        }
    }

    /// Fitted curve on a grid of t values.
    pub fn curve(&self, grid: impl IntoIterator<Item = f64>, sigma: f64) -> Vec<(f64, f64)> {
        grid.into_iter().map(|t| (t, self.prob(t, sigma))).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(f: Family, beta: &[f64]) -> SelectionModel {
        SelectionModel::new(f, beta.to_vec()).unwrap()
    }

    #[test]
    fn no_selection_is_certain_publication() {
        let m = model(Family::Logistic1, &[0.0]);
        for t in [-30.0, -2.0, 0.0, 1.5, 40.0] {
            assert_eq!(m.prob(t, 0.3), 1.0);
        }
        let m = model(Family::ModLogistic1, &[0.0]);
        assert_eq!(m.prob(-1.0, 0.7), 1.0);
    }

    #[test]
    fn probit_at_origin_is_half() {
        let m = model(Family::Probit2, &[0.0, 0.0]);
        for t in [-3.0, 0.0, 2.0] {
            assert_eq!(m.prob(t, 1.0), 0.5);
        }
    }

    #[test]
    fn fitted_logistic_curve_at_zero() {
        let m = model(Family::Logistic2, &[1.518, -0.064]);
        // 1 / (1 + e^-1.518)
        assert!((m.prob(0.0, 1.0) - 0.820_243_781_6).abs() < 1e-9);
    }

    #[test]
    fn gradient_reference_values() {
        let g = model(Family::Probit2, &[0.0, 0.0]).dprob_dbeta(0.0, 1.0);
        assert!((g[0] - 0.398_94).abs() < 1e-5);
        assert_eq!(g[1], 0.0);
        let g = model(Family::Logistic1, &[0.0]).dprob_dbeta(0.0, 1.0);
        assert!((g[0] + 0.25).abs() < 1e-15);
    }

    #[test]
    fn arity_is_enforced() {
        assert!(SelectionModel::new(Family::Probit2, vec![1.0]).is_err());
        assert!(SelectionModel::new(Family::Logistic1, vec![1.0, 2.0]).is_err());
        assert!(SelectionModel::new(Family::Logistic1, vec![f64::NAN]).is_err());
    }

    #[test]
    fn floor_keeps_weights_finite() {
        let m = model(Family::Probit2, &[-20.0, 20.0]);
        let p = m.prob(-40.0, 1.0);
        assert_eq!(p, PROB_FLOOR);
        assert!((1.0 / p).is_finite());
    }

    #[test]
    fn names_round_trip() {
        for f in Family::ALL {
            assert_eq!(f.name().parse::<Family>().unwrap(), f);
            let json = serde_json::to_string(&f).unwrap();
            assert_eq!(json, format!("\"{}\"", f.name()));
        }
    }

    #[test]
    fn orientation_flips_statistic() {
        let m =
            SelectionModel::with_orientation(Family::Logistic1, vec![1.0], Orientation::Reversed)
                .unwrap();
        assert_eq!(m.t_stat(-0.5, 0.25), 2.0);
    }
}
