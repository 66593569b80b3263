use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::MetaDataset;
use crate::error::EstimationError;
use crate::estimation::{
    mean_of, solve_beta_1param, solve_beta_2param, tau2_of, weighted, FitConfig, PointEstimates,
};
use crate::rng::substream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub seed: u64,
    pub level: f64,
    /// Keep every replicate's `(beta, tau2, mu)` in the result.
    pub keep_draws: bool,
}

impl BootstrapConfig {
    pub fn new(replicates: usize, seed: u64) -> Self {
        Self {
            replicates,
            seed,
            level: 0.95,
            keep_draws: false,
        }
    }

    pub fn with_level(mut self, level: f64) -> Self {
        self.level = level;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replicate {
    pub beta: Vec<f64>,
    pub tau2: f64,
    pub mu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub b_replicates: usize,
    pub n_failed: usize,
    pub seed: u64,
    pub level: f64,
    pub mu_bar: f64,
    pub sigma_boot_mu: f64,
    pub sigma_boot_tau2: f64,
    pub ci_mu: (f64, f64),
    pub ci_tau2: (f64, f64),
    pub ci_beta: Vec<(f64, f64)>,
    /// More than a tenth of the replicates failed to solve for beta.
    pub too_many_failures: bool,
    pub replicate_draws: Option<Vec<Replicate>>,
}

/// R type-7 sample quantile of sorted data.
pub(crate) fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Spread of the draws and the standardised-quantile interval around `point`.
fn standardized_interval(point: f64, draws: &[f64], level: f64) -> (f64, (f64, f64)) {
    let n = draws.len() as f64;
    let mean = draws.iter().sum::<f64>() / n;
    let sigma = (draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n).sqrt();
    if sigma.is_nan() || sigma <= 0.0 {
        return (0.0, (point, point));
    }
    let mut z: Vec<f64> = draws.iter().map(|d| (d - mean) / sigma).collect();
    z.sort_by(f64::total_cmp);
    let alpha = 1.0 - level;
    let q_lo = quantile_sorted(&z, alpha / 2.0);
    let q_hi = quantile_sorted(&z, 1.0 - alpha / 2.0);
    (sigma, (point + q_lo * sigma, point + q_hi * sigma))
}

fn one_replicate(
    dataset: &MetaDataset,
    estimates: &PointEstimates,
    config: &FitConfig,
    seed: u64,
    index: usize,
) -> Option<Replicate> {
    let mut rng = substream(seed, index as u64);
    let effects: Vec<f64> = dataset
        .published()
        .map(|(_, e)| {
            let sd = (e.se * e.se + estimates.tau2_hat).sqrt();
            Normal::new(estimates.mu_hat, sd)
                .expect("positive sd")
                .sample(&mut rng)
        })
        .collect();
    let draw = dataset.with_published_effects(&effects);
    let beta = match config.family.arity() {
        1 => {
            let (b, r) =
                solve_beta_1param(&draw, config.family, config.orientation, config.spec).ok()?;
            r.converged.then_some(vec![b])?
        }
        _ => {
            let (b, r) =
                solve_beta_2param(&draw, config.family, config.orientation, config.spec).ok()?;
            r.converged.then_some(b)?
        }
    };
    let rows = weighted(&draw, &config.model(&beta));
    let tau2 = tau2_of(&rows, draw.s_total()).tau2;
    let mu = mean_of(&rows, tau2);
    Some(Replicate { beta, tau2, mu })
}

/// Parametric bootstrap: redraw published effects from the fitted
/// random-effects model, re-solve beta, and recompute `tau2` and `mu`.
///
/// Replicates run in parallel; replicate `b` always uses substream `(seed, b)`.
pub fn parametric_bootstrap(
    dataset: &MetaDataset,
    estimates: &PointEstimates,
    config: &FitConfig,
    boot: &BootstrapConfig,
) -> Result<BootstrapResult, EstimationError> {
    if !(boot.level > 0.0 && boot.level < 1.0) {
        return Err(EstimationError::InvalidLevel(boot.level));
    }
    if boot.replicates == 0 {
        return Err(EstimationError::InvalidConfig(
            "bootstrap needs at least one replicate".into(),
        ));
    }
    if !estimates.converged {
        return Err(EstimationError::NotConverged("a bootstrap"));
    }
    let draws: Vec<Option<Replicate>> = (0..boot.replicates)
        .into_par_iter()
        .map(|b| one_replicate(dataset, estimates, config, boot.seed, b))
        .collect();
    let ok: Vec<Replicate> = draws.into_iter().flatten().collect();
    let n_failed = boot.replicates - ok.len();
    if ok.is_empty() {
        return Err(EstimationError::AllReplicatesFailed(boot.replicates));
    }

    let mus: Vec<f64> = ok.iter().map(|r| r.mu).collect();
    let taus: Vec<f64> = ok.iter().map(|r| r.tau2).collect();
    let (sigma_mu, ci_mu) = standardized_interval(estimates.mu_hat, &mus, boot.level);
    let (sigma_tau, (tlo, thi)) = standardized_interval(estimates.tau2_hat, &taus, boot.level);
    let ci_beta = (0..estimates.beta_hat.len())
        .map(|k| {
            let bk: Vec<f64> = ok.iter().map(|r| r.beta[k]).collect();
            standardized_interval(estimates.beta_hat[k], &bk, boot.level).1
        })
        .collect();

    Ok(BootstrapResult {
        b_replicates: boot.replicates,
        n_failed,
        seed: boot.seed,
        level: boot.level,
        mu_bar: mus.iter().sum::<f64>() / mus.len() as f64,
        sigma_boot_mu: sigma_mu,
        sigma_boot_tau2: sigma_tau,
        ci_mu,
        ci_tau2: (tlo.max(0.0), thi.max(estimates.tau2_hat)),
        ci_beta,
        too_many_failures: n_failed * 10 > boot.replicates,
        replicate_draws: boot.keep_draws.then_some(ok),
    })
}
