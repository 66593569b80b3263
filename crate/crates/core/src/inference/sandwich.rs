use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::MetaDataset;
use crate::error::EstimationError;
use crate::estimation::{FitConfig, PointEstimates};
use crate::normal::{norm_quantile, wald_p_value};

/// Stacked parameter `theta = (beta, tau2, mu)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaVector {
    pub beta: Vec<f64>,
    pub tau2: f64,
    pub mu: f64,
}

impl ThetaVector {
    pub fn from_estimates(est: &PointEstimates) -> Self {
        Self {
            beta: est.beta_hat.clone(),
            tau2: est.tau2_hat,
            mu: est.mu_hat,
        }
    }

    pub fn dim(&self) -> usize {
        self.beta.len() + 2
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.beta.clone();
        v.push(self.tau2);
        v.push(self.mu);
        v
    }

    pub fn from_slice(v: &[f64]) -> Self {
        let k = v.len() - 2;
        Self {
            beta: v[..k].to_vec(),
            tau2: v[k],
            mu: v[k + 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandwichResult {
    pub theta: ThetaVector,
    /// Row-major covariance of `theta_hat`, dimension `arity + 2`.
    pub covariance: Vec<Vec<f64>>,
    pub standard_errors: Vec<f64>,
    pub level: f64,
    /// Wald intervals per component of theta; the tau2 lower end is cut at 0.
    pub wald_cis: Vec<(f64, f64)>,
    pub wald_p_mu: f64,
    /// Wald p-value for the slope (two-parameter) or the single beta.
    pub wald_p_beta1: f64,
    /// `tau2_hat = 0`: the truncation makes the tau2 equation non-smooth, so
    /// beta and mu are treated with tau2 held at zero.
    pub tau_at_boundary: bool,
}

impl SandwichResult {
    pub fn se_mu(&self) -> f64 {
        *self.standard_errors.last().expect("theta has mu")
    }

    pub fn ci_mu(&self) -> (f64, f64) {
        *self.wald_cis.last().expect("theta has mu")
    }

    pub fn ci_tau2(&self) -> (f64, f64) {
        self.wald_cis[self.theta.beta.len()]
    }

    pub fn ci_beta(&self) -> &[(f64, f64)] {
        &self.wald_cis[..self.theta.beta.len()]
    }
}

/// Per-study stacked estimating functions `U_i(theta)`, one row per study.
pub fn stacked_scores(
    dataset: &MetaDataset,
    config: &FitConfig,
    theta: &ThetaVector,
) -> Vec<Vec<f64>> {
    let model = config.model(&theta.beta);
    let k = theta.beta.len();
    dataset
        .studies()
        .iter()
        .map(|s| {
            let mut row = vec![0.0; k + 2];
            let (inv_pi, published) = match s.estimate() {
                Some(e) => (1.0 / model.prob_for(e.effect, e.se), Some(e)),
                None => (0.0, None),
            };
            config
                .spec
                .g(s.n_total())
                .add_scaled(1.0 - inv_pi, &mut row[..k]);
            match published {
                Some(e) => {
                    let var = e.se * e.se;
                    let r = e.effect - theta.mu;
                    row[k] = inv_pi / var * (r * r - theta.tau2) - 1.0;
                    row[k + 1] = inv_pi / (var + theta.tau2) * r;
                }
                None => {
                    row[k] = -1.0;
                    row[k + 1] = 0.0;
                }
            }
            row
        })
        .collect()
}

fn mean_scores(dataset: &MetaDataset, config: &FitConfig, theta: &[f64]) -> Vec<f64> {
    let rows = stacked_scores(dataset, config, &ThetaVector::from_slice(theta));
    let s = rows.len() as f64;
    let mut out = vec![0.0; theta.len()];
    for r in &rows {
        for (o, v) in out.iter_mut().zip(r) {
            *o += v / s;
        }
    }
    out
}

/// `S^-1 sum_i dU_i / dtheta^T` by central differences with step
/// `1e-6 (1 + |theta_k|)`.
pub fn stacked_jacobian(
    dataset: &MetaDataset,
    config: &FitConfig,
    theta: &ThetaVector,
) -> DMatrix<f64> {
    let base = theta.to_vec();
    let d = base.len();
    let mut jac = DMatrix::zeros(d, d);
    for k in 0..d {
        let h = 1e-6 * (1.0 + base[k].abs());
        let mut up = base.clone();
        let mut dn = base.clone();
        up[k] += h;
        dn[k] -= h;
        let fu = mean_scores(dataset, config, &up);
        let fd = mean_scores(dataset, config, &dn);
        for r in 0..d {
            jac[(r, k)] = (fu[r] - fd[r]) / (2.0 * h);
        }
    }
    jac
}

fn sandwich_on(
    jac: &DMatrix<f64>,
    scores: &[Vec<f64>],
    keep: &[usize],
) -> Result<DMatrix<f64>, EstimationError> {
    let d = keep.len();
    let s = scores.len() as f64;
    let j = DMatrix::from_fn(d, d, |r, c| jac[(keep[r], keep[c])]);
    let scale: f64 = j.column_iter().map(|c| c.norm()).product();
    let det = j.determinant();
    if !det.is_finite() || det.abs() <= 1e-12 * scale {
        return Err(EstimationError::SingularJacobian);
    }
    let j_inv = j.try_inverse().ok_or(EstimationError::SingularJacobian)?;
    let mut meat = DMatrix::<f64>::zeros(d, d);
    for row in scores {
        for r in 0..d {
            for c in 0..d {
                meat[(r, c)] += row[keep[r]] * row[keep[c]] / s;
            }
        }
    }
    let cov = &j_inv * meat * j_inv.transpose() / s;
    Ok((&cov + cov.transpose()) * 0.5)
}

/// M-estimation sandwich covariance for `(beta, tau2, mu)` with Wald intervals.
pub fn sandwich_covariance(
    dataset: &MetaDataset,
    estimates: &PointEstimates,
    config: &FitConfig,
    level: f64,
) -> Result<SandwichResult, EstimationError> {
    if !(level > 0.0 && level < 1.0) {
        return Err(EstimationError::InvalidLevel(level));
    }
    if !estimates.converged {
        return Err(EstimationError::NotConverged("a sandwich covariance"));
    }
    let theta = ThetaVector::from_estimates(estimates);
    let d = theta.dim();
    let k = theta.beta.len();
    let jac = stacked_jacobian(dataset, config, &theta);
    let scores = stacked_scores(dataset, config, &theta);
    let all: Vec<usize> = (0..d).collect();
    let full = sandwich_on(&jac, &scores, &all)?;

    let tau_at_boundary = estimates.tau2_hat == 0.0;
    let cov = if tau_at_boundary {
        let keep: Vec<usize> = (0..d).filter(|&i| i != k).collect();
        let reduced = sandwich_on(&jac, &scores, &keep)?;
        let mut cov = DMatrix::zeros(d, d);
        for (r, &kr) in keep.iter().enumerate() {
            for (c, &kc) in keep.iter().enumerate() {
                cov[(kr, kc)] = reduced[(r, c)];
            }
        }
        cov[(k, k)] = full[(k, k)];
        cov
    } else {
        full
    };

    let z = norm_quantile(0.5 + level / 2.0);
    let point = theta.to_vec();
    let standard_errors: Vec<f64> = (0..d).map(|i| cov[(i, i)].max(0.0).sqrt()).collect();
    let wald_cis = (0..d)
        .map(|i| {
            let lo = point[i] - z * standard_errors[i];
            let hi = point[i] + z * standard_errors[i];
            if i == k {
                (lo.max(0.0), hi)
            } else {
                (lo, hi)
            }
        })
        .collect();
    Ok(SandwichResult {
        wald_p_mu: wald_p_value(theta.mu, standard_errors[d - 1]),
        wald_p_beta1: wald_p_value(point[k - 1], standard_errors[k - 1]),
        covariance: (0..d)
            .map(|r| (0..d).map(|c| cov[(r, c)]).collect())
            .collect(),
        standard_errors,
        level,
        wald_cis,
        tau_at_boundary,
        theta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::StudyRecord;
    use crate::estimation::{fit, u_beta_jacobian};
    use crate::rng::substream;
    use crate::selection::{Family, Orientation};
    use rand_distr::{Distribution, Normal};

    fn clopidogrel() -> MetaDataset {
        MetaDataset::read_csv(include_str!("../../../../data/clopidogrel.csv").as_bytes()).unwrap()
    }

    fn logistic1_fit() -> (MetaDataset, FitConfig, PointEstimates) {
        let ds = clopidogrel();
        let config = FitConfig::new(Family::Logistic1).with_orientation(Orientation::Reversed);
        let est = fit(&ds, &config).unwrap();
        (ds, config, est)
    }

    #[test]
    fn clopidogrel_logistic1_intervals() {
        let (ds, config, est) = logistic1_fit();
        let s = sandwich_covariance(&ds, &est, &config, 0.95).unwrap();
        let (lo, hi) = s.ci_beta()[0];
        assert!(
            (lo + 0.222).abs() < 0.01 && (hi - 2.257).abs() < 0.01,
            "[{lo}, {hi}]"
        );
        assert!(s.tau_at_boundary);
        let (tlo, thi) = s.ci_tau2();
        assert_eq!(tlo, 0.0);
        assert!((thi - 0.181).abs() < 0.005, "{thi}");
        let (mlo, mhi) = s.ci_mu();
        assert!(mlo < est.mu_hat && est.mu_hat < mhi);
    }

    #[test]
    fn covariance_is_symmetric_psd() {
        let (ds, config, est) = logistic1_fit();
        let s = sandwich_covariance(&ds, &est, &config, 0.95).unwrap();
        let d = s.covariance.len();
        let c = DMatrix::from_fn(d, d, |r, k| s.covariance[r][k]);
        assert_eq!(c, c.transpose());
        let eig = c.clone().symmetric_eigen().eigenvalues;
        assert!(eig.min() >= -1e-10 * c.trace());
        assert!(s.standard_errors.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn beta_block_matches_analytic_derivative() {
        let (ds, config, est) = logistic1_fit();
        let theta = ThetaVector::from_estimates(&est);
        let jac = stacked_jacobian(&ds, &config, &theta);
        let analytic = u_beta_jacobian(&ds, &est.model(), config.spec)[0] / ds.s_total() as f64;
        assert!((jac[(0, 0)] - analytic).abs() <= 1e-4 * analytic.abs());
    }

    #[test]
    fn reduces_to_random_effects_variance() {
        // pi = 1, equal sigma: robust se of mu is close to sqrt((sigma^2 + tau2) / N)
        let mut rng = substream(8, 0);
        let sigma = 0.3;
        let draw = Normal::new(0.1, (sigma * sigma + 0.04f64).sqrt()).unwrap();
        let rows = (0..400)
            .map(|i| {
                StudyRecord::published(format!("s{i}"), draw.sample(&mut rng), sigma, 100).unwrap()
            })
            .collect();
        let ds = MetaDataset::new(rows).unwrap();
        let config = FitConfig::new(Family::Logistic1);
        let est = fit(&ds, &config).unwrap();
        assert_eq!(est.beta_hat, [0.0]);
        assert!(est.tau2_hat > 0.0);
        let s = sandwich_covariance(&ds, &est, &config, 0.95).unwrap();
        let classical = ((sigma * sigma + est.tau2_hat) / 400.0).sqrt();
        assert!(
            (s.se_mu() / classical - 1.0).abs() < 0.05,
            "{} vs {classical}",
            s.se_mu()
        );
    }

    #[test]
    fn wider_level_gives_wider_interval() {
        let (ds, config, est) = logistic1_fit();
        let a = sandwich_covariance(&ds, &est, &config, 0.95).unwrap();
        let b = sandwich_covariance(&ds, &est, &config, 0.99).unwrap();
        assert!(b.ci_mu().0 < a.ci_mu().0 && a.ci_mu().1 < b.ci_mu().1);
    }

    #[test]
    fn refuses_bad_inputs() {
        let (ds, config, mut est) = logistic1_fit();
        assert_eq!(
            sandwich_covariance(&ds, &est, &config, 1.0).unwrap_err(),
            EstimationError::InvalidLevel(1.0)
        );
        est.converged = false;
        assert!(matches!(
            sandwich_covariance(&ds, &est, &config, 0.95).unwrap_err(),
            EstimationError::NotConverged(_)
        ));
    }

    #[test]
    fn scores_of_registry_rows() {
        let (ds, config, est) = logistic1_fit();
        let theta = ThetaVector::from_estimates(&est);
        let rows = stacked_scores(&ds, &config, &theta);
        for (s, r) in ds.studies().iter().zip(&rows) {
            if !s.is_published() {
                assert_eq!(r, &vec![(s.n_total() as f64).sqrt(), -1.0, 0.0]);
            }
        }
    }
}
