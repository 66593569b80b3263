use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::MetaDataset;
use crate::error::SimulationError;
use crate::estimation::{dl_fit, fit, FitConfig};
use crate::inference::{parametric_bootstrap, sandwich_covariance, BootstrapConfig};
use crate::rng::{child_seed, substream};
use crate::selection::{Family, Orientation};

use super::generate::{apply_selection, generate_population, Design, GenerativeConfig};

/// Regeneration attempts per replicate before giving up on it.
const MAX_REDRAWS: u64 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CiKind {
    Wald,
    Asymptotic,
    Bootstrap,
}

impl CiKind {
    pub fn name(self) -> &'static str {
        match self {
            CiKind::Wald => "wald",
            CiKind::Asymptotic => "asymptotic",
            CiKind::Bootstrap => "bootstrap",
        }
    }
}

/// An estimator applied to every replicate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MethodSpec {
    /// DerSimonian-Laird on the published studies, Wald interval for mu.
    Dl,
    /// IPW with the given family. The orientation defaults to that of the
    /// true selection model.
    Ipw {
        family: Family,
        ci: CiKind,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        orientation: Option<Orientation>,
    },
}

impl MethodSpec {
    pub fn ipw(family: Family, ci: CiKind) -> Self {
        MethodSpec::Ipw {
            family,
            ci,
            orientation: None,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            MethodSpec::Dl => "DL",
            MethodSpec::Ipw { .. } => "IPW",
        }
    }

    pub fn family(&self) -> Option<Family> {
        match self {
            MethodSpec::Dl => None,
            MethodSpec::Ipw { family, .. } => Some(*family),
        }
    }

    pub fn ci_kind(&self) -> CiKind {
        match self {
            MethodSpec::Dl => CiKind::Wald,
            MethodSpec::Ipw { ci, .. } => *ci,
        }
    }
}

fn default_level() -> f64 {
    0.95
}

fn default_boot_b() -> usize {
    1000
}

/// A simulation scenario: generative truth plus the methods to compare.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub id: String,
    #[serde(flatten)]
    pub generative: GenerativeConfig,
    pub methods: Vec<MethodSpec>,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default = "default_boot_b")]
    pub boot_b: usize,
}

impl ScenarioConfig {
    /// DL plus correctly and incorrectly specified IPW, each with asymptotic
    /// and bootstrap intervals.
    pub fn for_design(
        design: Design,
        s_total: usize,
        tau: f64,
        n_replicates: usize,
        seed: u64,
    ) -> Self {
        let truth = design.selection().family;
        let alt = design.alternative_family();
        Self {
            id: format!("sDataset{}_S{}_tau{:.2}", design.index(), s_total, tau),
            generative: design.config(s_total, tau, n_replicates, seed),
            methods: vec![
                MethodSpec::Dl,
                MethodSpec::ipw(truth, CiKind::Asymptotic),
                MethodSpec::ipw(truth, CiKind::Bootstrap),
                MethodSpec::ipw(alt, CiKind::Asymptotic),
                MethodSpec::ipw(alt, CiKind::Bootstrap),
            ],
            level: default_level(),
            boot_b: default_boot_b(),
        }
    }

    pub fn validate(&self) -> Result<(), SimulationError> {
        self.generative.validate()?;
        if self.methods.is_empty() {
            return Err(SimulationError::InvalidConfig(
                "method list is empty".into(),
            ));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(SimulationError::InvalidConfig(format!(
                "level must lie in (0, 1), got {}",
                self.level
            )));
        }
        let needs_boot = self
            .methods
            .iter()
            .any(|m| m.ci_kind() == CiKind::Bootstrap);
        if needs_boot && self.boot_b == 0 {
            return Err(SimulationError::InvalidConfig(
                "boot_b must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Every design at S in {15, 25, 50, 100} and tau in {0.05, 0.15, 0.30}.
pub fn full_grid(n_replicates: usize, seed: u64) -> Vec<ScenarioConfig> {
    let mut out = Vec::new();
    for (d, design) in Design::ALL.into_iter().enumerate() {
        for (i, s) in [15, 25, 50, 100].into_iter().enumerate() {
            for (j, tau) in [0.05, 0.15, 0.30].into_iter().enumerate() {
                let cell = (d * 12 + i * 3 + j) as u64;
                out.push(ScenarioConfig::for_design(
                    design,
                    s,
                    tau,
                    n_replicates,
                    child_seed(seed, cell),
                ));
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parameter {
    Mu,
    Tau2,
}

impl Parameter {
    pub fn name(self) -> &'static str {
        match self {
            Parameter::Mu => "mu",
            Parameter::Tau2 => "tau2",
        }
    }
}

/// One method's estimate of one parameter in one replicate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub converged: bool,
    pub estimate: f64,
    pub ci: Option<(f64, f64)>,
}

impl Outcome {
    fn failed() -> Self {
        Self {
            converged: false,
            estimate: f64::NAN,
            ci: None,
        }
    }
}

/// Results of all methods on one replicate, indexed like the method list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateOutcome {
    pub n_published: usize,
    /// Populations discarded because selection left fewer than two studies.
    pub redraws: u64,
    pub mu: Vec<Outcome>,
    pub tau2: Vec<Outcome>,
}

/// Aggregated performance of one method for one parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMetrics {
    pub scenario_id: String,
    pub method: String,
    pub family: Option<Family>,
    pub ci_kind: CiKind,
    pub parameter: Parameter,
    pub ave: f64,
    pub sd: f64,
    /// Coverage over converged replicates with an interval; `None` when the
    /// method gives no interval for this parameter.
    pub cp: Option<f64>,
    pub loci: Option<f64>,
    pub noc: usize,
    /// Zero `tau2` estimates among converged replicates; `tau2` rows only.
    pub noz: Option<usize>,
    pub n_replicates: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub config: ScenarioConfig,
    pub metrics: Vec<ScenarioMetrics>,
    /// Mean share of unpublished studies across replicates.
    pub unpublished_fraction: f64,
    pub n_redraws: u64,
    /// Replicates abandoned after too many all-suppressed draws.
    pub n_abandoned: usize,
}

impl ScenarioReport {
    pub fn metric(&self, method: &MethodSpec, parameter: Parameter) -> Option<&ScenarioMetrics> {
        self.metrics.iter().find(|m| {
            m.method == method.label()
                && m.family == method.family()
                && m.ci_kind == method.ci_kind()
                && m.parameter == parameter
        })
    }
}

fn selected_dataset(cfg: &GenerativeConfig, rep_seed: u64) -> Option<(MetaDataset, u64)> {
    for attempt in 0..MAX_REDRAWS {
        let mut rng = substream(rep_seed, attempt);
        let pop = generate_population(cfg, &mut rng);
        if let Ok(ds) = apply_selection(&pop.dataset, &cfg.selection, &mut rng) {
            return Some((ds, attempt));
        }
    }
    None
}

fn run_method(
    ds: &MetaDataset,
    method: &MethodSpec,
    scenario: &ScenarioConfig,
    boot_seed: u64,
) -> (Outcome, Outcome) {
    match *method {
        MethodSpec::Dl => {
            let d = dl_fit(ds);
            (
                Outcome {
                    converged: true,
                    estimate: d.mu_hat,
                    ci: Some(d.ci_mu(scenario.level)),
                },
                Outcome {
                    converged: true,
                    estimate: d.tau2_hat,
                    ci: None,
                },
            )
        }
        MethodSpec::Ipw {
            family,
            ci,
            orientation,
        } => {
            let config = FitConfig::new(family)
                .with_orientation(orientation.unwrap_or(scenario.generative.selection.orientation));
            let est = match fit(ds, &config) {
                Ok(e) if e.converged => e,
                _ => return (Outcome::failed(), Outcome::failed()),
            };
            let (ci_mu, ci_tau2) = match ci {
                CiKind::Bootstrap => {
                    let boot =
                        BootstrapConfig::new(scenario.boot_b, boot_seed).with_level(scenario.level);
                    match parametric_bootstrap(ds, &est, &config, &boot) {
                        Ok(b) => (Some(b.ci_mu), Some(b.ci_tau2)),
                        Err(_) => (None, None),
                    }
                }
                _ => match sandwich_covariance(ds, &est, &config, scenario.level) {
                    Ok(s) => (Some(s.ci_mu()), Some(s.ci_tau2())),
                    Err(_) => (None, None),
                },
            };
            (
                Outcome {
                    converged: true,
                    estimate: est.mu_hat,
                    ci: ci_mu,
                },
                Outcome {
                    converged: true,
                    estimate: est.tau2_hat,
                    ci: ci_tau2,
                },
            )
        }
    }
}

/// Generate, select and analyse replicate `index` of a scenario.
///
/// Depends only on `(seed, index)`, so replicates can run in any order.
pub fn run_replicate(scenario: &ScenarioConfig, index: usize) -> Option<ReplicateOutcome> {
    let rep_seed = child_seed(scenario.generative.seed, index as u64);
    let (ds, redraws) = selected_dataset(&scenario.generative, rep_seed)?;
    let k = scenario.methods.len();
    let mut mu = Vec::with_capacity(k);
    let mut tau2 = Vec::with_capacity(k);
    for (m, method) in scenario.methods.iter().enumerate() {
        let boot_seed = child_seed(rep_seed, u64::MAX - m as u64);
        let (a, b) = run_method(&ds, method, scenario, boot_seed);
        mu.push(a);
        tau2.push(b);
    }
    Some(ReplicateOutcome {
        n_published: ds.n_published(),
        redraws,
        mu,
        tau2,
    })
}

fn aggregate(
    scenario: &ScenarioConfig,
    method: &MethodSpec,
    parameter: Parameter,
    outcomes: &[Outcome],
) -> ScenarioMetrics {
    let truth = match parameter {
        Parameter::Mu => scenario.generative.mu,
        Parameter::Tau2 => scenario.generative.tau.powi(2),
    };
    let ok: Vec<&Outcome> = outcomes.iter().filter(|o| o.converged).collect();
    let n = ok.len() as f64;
    let ave = ok.iter().map(|o| o.estimate).sum::<f64>() / n;
    let sd = if ok.len() > 1 {
        (ok.iter().map(|o| (o.estimate - ave).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        f64::NAN
    };
    let cis: Vec<(f64, f64)> = ok.iter().filter_map(|o| o.ci).collect();
    let (cp, loci) = if cis.is_empty() {
        (None, None)
    } else {
        let m = cis.len() as f64;
        let covered = cis
            .iter()
            .filter(|(lo, hi)| *lo <= truth && truth <= *hi)
            .count();
        let len = cis.iter().map(|(lo, hi)| hi - lo).sum::<f64>() / m;
        (Some(covered as f64 / m), Some(len))
    };
    let noz =
        (parameter == Parameter::Tau2).then(|| ok.iter().filter(|o| o.estimate == 0.0).count());
    ScenarioMetrics {
        scenario_id: scenario.id.clone(),
        method: method.label().to_string(),
        family: method.family(),
        ci_kind: method.ci_kind(),
        parameter,
        ave,
        sd,
        cp,
        loci,
        noc: ok.len(),
        noz,
        n_replicates: scenario.generative.n_replicates,
        seed: scenario.generative.seed,
    }
}

/// Summarise per-replicate outcomes into the metrics table.
pub fn summarize(
    scenario: &ScenarioConfig,
    replicates: &[Option<ReplicateOutcome>],
) -> ScenarioReport {
    let done: Vec<&ReplicateOutcome> = replicates.iter().flatten().collect();
    let mut metrics = Vec::new();
    for (m, method) in scenario.methods.iter().enumerate() {
        let mu: Vec<Outcome> = done.iter().map(|r| r.mu[m]).collect();
        let tau2: Vec<Outcome> = done.iter().map(|r| r.tau2[m]).collect();
        metrics.push(aggregate(scenario, method, Parameter::Mu, &mu));
        metrics.push(aggregate(scenario, method, Parameter::Tau2, &tau2));
    }
    let s = scenario.generative.s_total as f64;
    let unpublished_fraction = done
        .iter()
        .map(|r| 1.0 - r.n_published as f64 / s)
        .sum::<f64>()
        / done.len().max(1) as f64;
    ScenarioReport {
        config: scenario.clone(),
        metrics,
        unpublished_fraction,
        n_redraws: done.iter().map(|r| r.redraws).sum(),
        n_abandoned: replicates.len() - done.len(),
    }
}

/// Run every replicate of a scenario in parallel and aggregate.
///
/// Per-replicate failures are counted in the metrics, never raised.
pub fn run_scenario(scenario: &ScenarioConfig) -> Result<ScenarioReport, SimulationError> {
    scenario.validate()?;
    let replicates: Vec<Option<ReplicateOutcome>> = (0..scenario.generative.n_replicates)
        .into_par_iter()
        .map(|i| run_replicate(scenario, i))
        .collect();
    Ok(summarize(scenario, &replicates))
}

#[derive(Serialize)]
struct MetricsRow<'a> {
    scenario_id: &'a str,
    method: &'a str,
    family: &'a str,
    ci_kind: &'a str,
    parameter: &'a str,
    ave: Option<f64>,
    sd: Option<f64>,
    cp: Option<f64>,
    loci: Option<f64>,
    noc: usize,
    noz: Option<usize>,
    n_replicates: usize,
    seed: u64,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

/// Write metrics as CSV with a header row; undefined values are left empty.
pub fn write_metrics_csv<W: Write>(writer: W, metrics: &[ScenarioMetrics]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for m in metrics {
        w.serialize(MetricsRow {
            scenario_id: &m.scenario_id,
            method: &m.method,
            family: m.family.map(|f| f.name()).unwrap_or(""),
            ci_kind: m.ci_kind.name(),
            parameter: m.parameter.name(),
            ave: finite(m.ave),
            sd: finite(m.sd),
            cp: m.cp,
            loci: m.loci,
            noc: m.noc,
            noz: m.noz,
            n_replicates: m.n_replicates,
            seed: m.seed,
        })?;
    }
    w.flush()?;
    Ok(())
}
