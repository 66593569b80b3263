use serde::{Deserialize, Serialize};

use crate::data::MetaDataset;
use crate::error::EstimationError;
use crate::selection::{Family, Orientation, SelectionModel};

use super::equations::EstimatingEquationSpec;
use super::solver::{solve_beta_1param, solve_beta_2param, SolverReport};

/// Published study with its inverse publication weight `1 / pi_i`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Weighted {
    pub y: f64,
    pub var: f64,
    pub inv_pi: f64,
}

pub(crate) fn weighted(dataset: &MetaDataset, model: &SelectionModel) -> Vec<Weighted> {
    dataset
        .published()
        .map(|(_, e)| Weighted {
            y: e.effect,
            var: e.se * e.se,
            inv_pi: 1.0 / model.prob_for(e.effect, e.se),
        })
        .collect()
}

pub(crate) fn fixed_mean_of(rows: &[Weighted]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for r in rows {
        let w = r.inv_pi / r.var;
        num += w * r.y;
        den += w;
    }
    num / den
}

pub(crate) fn mean_of(rows: &[Weighted], tau2: f64) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for r in rows {
        let w = r.inv_pi / (r.var + tau2);
        num += w * r.y;
        den += w;
    }
    num / den
}

pub(crate) fn tau2_of(rows: &[Weighted], s_total: usize) -> Tau2Estimate {
    let mu_f = fixed_mean_of(rows);
    let (mut sw, mut sw2, mut q) = (0.0, 0.0, 0.0);
    for r in rows {
        let w = r.inv_pi / r.var;
        sw += w;
        sw2 += w / r.var;
        q += w * (r.y - mu_f).powi(2);
    }
    // A_S / B_S: the 1/S factors cancel
    let denom = sw - sw2 / sw;
    let numer = q - (s_total as f64 - 1.0);
    if denom.is_nan() || denom <= 0.0 {
        return Tau2Estimate {
            tau2: 0.0,
            q_ipw: q,
            degenerate: true,
        };
    }
    Tau2Estimate {
        tau2: (numer / denom).max(0.0),
        q_ipw: q,
        degenerate: false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tau2Estimate {
    pub tau2: f64,
    pub q_ipw: f64,
    /// The moment denominator was not positive and `tau2` was set to zero.
    pub degenerate: bool,
}

/// Weighted fixed-effect mean with weights `D_i / (sigma_i^2 pi_i)`.
pub fn ipw_fixed_mean(dataset: &MetaDataset, model: &SelectionModel) -> f64 {
    fixed_mean_of(&weighted(dataset, model))
}

/// IPW version of the DerSimonian-Laird estimator, truncated at zero,
/// together with `Q_IPW`.
pub fn ipw_tau2(dataset: &MetaDataset, model: &SelectionModel) -> Tau2Estimate {
    tau2_of(&weighted(dataset, model), dataset.s_total())
}

/// Random-effects mean with weights `D_i / ((sigma_i^2 + tau2) pi_i)`.
pub fn ipw_mean(dataset: &MetaDataset, model: &SelectionModel, tau2: f64) -> f64 {
    mean_of(&weighted(dataset, model), tau2)
}

/// `H^2 = Q / (S - 1)` and `I^2 = (H^2 - 1) / H^2`, floored at zero.
pub fn heterogeneity(q: f64, s: usize) -> (f64, f64) {
    let h2 = q / (s as f64 - 1.0);
    let i2 = if h2 > 1.0 { (h2 - 1.0) / h2 } else { 0.0 };
    (h2, i2)
}

/// Selection family, orientation and estimating-equation choice for one fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub family: Family,
    pub orientation: Orientation,
    pub spec: EstimatingEquationSpec,
}

impl FitConfig {
    pub fn new(family: Family) -> Self {
        Self {
            family,
            orientation: Orientation::Natural,
            spec: EstimatingEquationSpec::for_family(family),
        }
    }

    pub fn with_orientation(mut self, orientation: Orientation) -> Self {
        self.orientation = orientation;
        self
    }

    pub(crate) fn model(&self, beta: &[f64]) -> SelectionModel {
        SelectionModel {
            family: self.family,
            beta: beta.to_vec(),
            orientation: self.orientation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointEstimates {
    pub family: Family,
    pub orientation: Orientation,
    pub beta_hat: Vec<f64>,
    pub tau2_hat: f64,
    pub mu_hat: f64,
    pub mu_fixed_hat: f64,
    pub q_ipw: f64,
    pub h2_ipw: f64,
    pub i2_ipw: f64,
    pub converged: bool,
    pub tau2_degenerate: bool,
    pub solver_report: SolverReport,
}

impl PointEstimates {
    pub fn model(&self) -> SelectionModel {
        SelectionModel {
            family: self.family,
            beta: self.beta_hat.clone(),
            orientation: self.orientation,
        }
    }
}

/// Solve for beta, then compute `tau2`, `mu` and the heterogeneity summary.
pub fn fit(dataset: &MetaDataset, config: &FitConfig) -> Result<PointEstimates, EstimationError> {
    if config.spec.arity() != config.family.arity() {
        return Err(EstimationError::Arity {
            family: config.family.name(),
            expected: config.family.arity(),
            got: config.spec.arity(),
        });
    }
    let (beta_hat, report) = match config.family.arity() {
        1 => solve_beta_1param(dataset, config.family, config.orientation, config.spec)
            .map(|(b, r)| (vec![b], r))?,
        _ => solve_beta_2param(dataset, config.family, config.orientation, config.spec)?,
    };
    Ok(estimates_at(dataset, config, beta_hat, report))
}

/// Point estimates at a given beta, bypassing the solver.
pub fn estimates_at(
    dataset: &MetaDataset,
    config: &FitConfig,
    beta: Vec<f64>,
    report: SolverReport,
) -> PointEstimates {
    let rows = weighted(dataset, &config.model(&beta));
    let tau = tau2_of(&rows, dataset.s_total());
    let mu_hat = mean_of(&rows, tau.tau2);
    let (h2, i2) = heterogeneity(tau.q_ipw, dataset.s_total());
    PointEstimates {
        family: config.family,
        orientation: config.orientation,
        beta_hat: beta,
        tau2_hat: tau.tau2,
        mu_hat,
        mu_fixed_hat: fixed_mean_of(&rows),
        q_ipw: tau.q_ipw,
        h2_ipw: h2,
        i2_ipw: i2,
        converged: report.converged,
        tau2_degenerate: tau.degenerate,
        solver_report: report,
    }
}


#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    fn rows() -> impl Strategy<Value = Vec<Weighted>> {
        prop::collection::vec((-3.0..3.0f64, 0.01..2.0f64, 1.0..50.0f64), 2..30).prop_map(|v| {
            v.into_iter()
                .map(|(y, var, inv_pi)| Weighted { y, var, inv_pi })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn means_shift_with_the_data(rows in rows(), c in -5.0..5.0f64, tau2 in 0.0..1.0f64) {
            let shifted: Vec<Weighted> = rows
                .iter()
                .map(|r| Weighted { y: r.y + c, ..*r })
                .collect();
            let tol = 1e-12 * (1.0 + c.abs());
            prop_assert!((fixed_mean_of(&shifted) - fixed_mean_of(&rows) - c).abs() < tol);
            prop_assert!((mean_of(&shifted, tau2) - mean_of(&rows, tau2) - c).abs() < tol);
            // tau2 depends on residuals only
            let s = rows.len() + 3;
            let a = tau2_of(&rows, s).tau2;
            let b = tau2_of(&shifted, s).tau2;
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a));
        }

        #[test]
        fn tau2_is_nonnegative(rows in rows(), extra in 0usize..20) {
            let t = tau2_of(&rows, rows.len() + extra);
            prop_assert!(t.tau2 >= 0.0 && t.tau2.is_finite());
            prop_assert!(t.q_ipw >= 0.0);
        }
    }
}
