use std::fmt::Write as _;

use serde::Serialize;

pub const SCHEMA: u32 = 1;

#[derive(Debug, Clone, Serialize)]
pub struct DatasetSummary {
    pub path: String,
    pub n_published: usize,
    pub n_unpublished: usize,
    pub s_total: usize,
}

/// One line of the analysis table.
#[derive(Debug, Clone, Serialize)]
pub struct MethodRow {
    pub method: String,
    pub family: Option<String>,
    pub orientation: Option<String>,
    pub ci_kind: String,
    /// `mu` on the analysis (log) scale.
    pub mu: f64,
    /// Reported estimate: `mu`, or `exp(mu)` with `--exp`.
    pub estimate: f64,
    pub ci_lower: Option<f64>,
    pub ci_upper: Option<f64>,
    pub p_value: Option<f64>,
    pub tau2: f64,
    pub tau2_ci_lower: Option<f64>,
    pub tau2_ci_upper: Option<f64>,
    pub i2: f64,
    pub beta: Vec<f64>,
    pub beta_ci: Vec<Option<(f64, f64)>>,
    pub converged: bool,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolverDiagnostics {
    pub family: String,
    pub iterations: usize,
    pub residual: f64,
    pub tolerance: f64,
    pub converged: bool,
    pub at_bound: bool,
    pub tau2_degenerate: bool,
    pub bootstrap_failed: Option<usize>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalysisReport {
    pub schema: u32,
    pub dataset: DatasetSummary,
    pub level: f64,
    pub seed: u64,
    pub boot_b: usize,
    /// Estimates and intervals for mu are on the odds-ratio scale.
    pub exp: bool,
    pub rows: Vec<MethodRow>,
    pub diagnostics: Vec<SolverDiagnostics>,
}

#[derive(Serialize)]
struct CsvRow<'a> {
    method: &'a str,
    family: &'a str,
    orientation: &'a str,
    ci_kind: &'a str,
    mu: f64,
    estimate: f64,
    ci_lower: Option<f64>,
    ci_upper: Option<f64>,
    p_value: Option<f64>,
    tau2: f64,
    tau2_ci_lower: Option<f64>,
    tau2_ci_upper: Option<f64>,
    i2: f64,
    beta: String,
    converged: bool,
    flags: String,
}

fn join(v: &[f64]) -> String {
    v.iter()
        .map(|b| b.to_string())
        .collect::<Vec<_>>()
        .join(";")
}

impl AnalysisReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(CsvRow {
                method: &r.method,
                family: r.family.as_deref().unwrap_or(""),
                orientation: r.orientation.as_deref().unwrap_or(""),
                ci_kind: &r.ci_kind,
                mu: r.mu,
                estimate: r.estimate,
                ci_lower: r.ci_lower,
                ci_upper: r.ci_upper,
                p_value: r.p_value,
                tau2: r.tau2,
                tau2_ci_lower: r.tau2_ci_lower,
                tau2_ci_upper: r.tau2_ci_upper,
                i2: r.i2,
                beta: join(&r.beta),
                converged: r.converged,
                flags: r.flags.join(";"),
            })
            .expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8")
    }

    pub fn to_table(&self) -> String {
        let d = &self.dataset;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{}: N = {} published, M = {} registry-only, S = {}",
            d.path, d.n_published, d.n_unpublished, d.s_total
        );
        let scale = if self.exp { "OR" } else { "mu" };
        let _ = writeln!(
            out,
            "{:<5} {:<11} {:<10} {:>22} {:>7} {:>22} {:>6}  beta",
            "", "selection", "ci", scale, "p", "tau2", "I2"
        );
        let fmt_ci = |lo: Option<f64>, hi: Option<f64>, point: f64| match (lo, hi) {
            (Some(lo), Some(hi)) => format!("{point:.3} [{lo:.3}, {hi:.3}]"),
            _ => format!("{point:.3}"),
        };
        for r in &self.rows {
            let p = r
                .p_value
                .map(|p| format!("{p:.3}"))
                .unwrap_or_else(|| "-".into());
            let beta = r
                .beta
                .iter()
                .map(|b| format!("{b:.3}"))
                .collect::<Vec<_>>()
                .join(", ");
            let _ = writeln!(
                out,
                "{:<5} {:<11} {:<10} {:>22} {:>7} {:>22} {:>6.3}  {}{}",
                r.method,
                r.family.as_deref().unwrap_or("-"),
                r.ci_kind,
                fmt_ci(r.ci_lower, r.ci_upper, r.estimate),
                p,
                fmt_ci(r.tau2_ci_lower, r.tau2_ci_upper, r.tau2),
                r.i2,
                beta,
                if r.flags.is_empty() {
                    String::new()
                } else {
                    format!("  ({})", r.flags.join(", "))
                }
            );
        }
        out
    }
}

/// Machine-readable failure written to stderr.
#[derive(Serialize)]
pub struct ErrorReport<'a> {
    pub schema: u32,
    pub error: ErrorBody<'a>,
}

#[derive(Serialize)]
pub struct ErrorBody<'a> {
    pub kind: &'a str,
    pub message: String,
}
