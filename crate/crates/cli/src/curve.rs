use std::fmt::Write as _;

use regmeta::inference::{parametric_bootstrap, sandwich_covariance, BootstrapConfig};
use regmeta::{fit, FitConfig};
use serde::Serialize;

use crate::analyze::{check_level, load};
use crate::args::{CiChoice, CurveArgs, CurveFormat};
use crate::error::CliError;
use crate::report::SCHEMA;

#[derive(Debug, Serialize)]
pub struct CurvePoint {
    pub t: f64,
    pub pi: f64,
}

#[derive(Debug, Serialize)]
pub struct CurveReport {
    pub schema: u32,
    pub family: String,
    pub orientation: String,
    pub sigma: f64,
    pub beta: Vec<f64>,
    pub converged: bool,
    pub level: f64,
    pub beta_ci_asymptotic: Option<Vec<(f64, f64)>>,
    pub beta_ci_bootstrap: Option<Vec<(f64, f64)>>,
    pub curve: Vec<CurvePoint>,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn run(args: &CurveArgs) -> Result<CurveReport, CliError> {
    check_level(args.level)?;
    if let Some(s) = args.sigma {
        if !(s.is_finite() && s > 0.0) {
            return Err(CliError::Usage(format!(
                "--sigma must be positive, got {s}"
            )));
        }
    }
    let ds = load(&args.data)?;
    let config = FitConfig::new(args.family).with_orientation(args.orientation);
    let est = fit(&ds, &config).map_err(|e| CliError::Numerical(e.to_string()))?;
    let sigma = args
        .sigma
        .unwrap_or_else(|| median(ds.published().map(|(_, e)| e.se).collect()));

    let mut asym = None;
    let mut boot = None;
    if est.converged {
        if args.ci != CiChoice::Bootstrap {
            asym = sandwich_covariance(&ds, &est, &config, args.level)
                .ok()
                .map(|s| s.ci_beta().to_vec());
        }
        if args.ci != CiChoice::Asymptotic {
            let b = BootstrapConfig::new(args.boot_b, args.seed).with_level(args.level);
            boot = parametric_bootstrap(&ds, &est, &config, &b)
                .ok()
                .map(|r| r.ci_beta);
        }
    }
    let model = est.model();
    let curve = model
        .curve(args.t_range.points(), sigma)
        .into_iter()
        .map(|(t, pi)| CurvePoint { t, pi })
        .collect();
    Ok(CurveReport {
        schema: SCHEMA,
        family: args.family.name().into(),
        orientation: args.orientation.to_string(),
        sigma,
        beta: est.beta_hat.clone(),
        converged: est.converged,
        level: args.level,
        beta_ci_asymptotic: asym,
        beta_ci_bootstrap: boot,
        curve,
    })
}

fn cis(v: &Option<Vec<(f64, f64)>>) -> String {
    match v {
        Some(v) => v
            .iter()
            .map(|(lo, hi)| format!("[{lo}, {hi}]"))
            .collect::<Vec<_>>()
            .join(";"),
        None => "none".into(),
    }
}

impl CurveReport {
    pub fn render(&self, format: CurveFormat) -> String {
        match format {
            CurveFormat::Json => serde_json::to_string_pretty(self).expect("report serializes"),
            CurveFormat::Csv => {
                let mut out = String::new();
                let beta: Vec<String> = self.beta.iter().map(|b| b.to_string()).collect();
                let _ = writeln!(
                    out,
                    "# family={} orientation={} sigma={} converged={}",
                    self.family, self.orientation, self.sigma, self.converged
                );
                let _ = writeln!(out, "# beta={}", beta.join(";"));
                let _ = writeln!(
                    out,
                    "# beta_ci_asymptotic={}",
                    cis(&self.beta_ci_asymptotic)
                );
                let _ = writeln!(out, "# beta_ci_bootstrap={}", cis(&self.beta_ci_bootstrap));
                out.push_str("t,pi\n");
                for p in &self.curve {
                    let _ = writeln!(out, "{},{}", p.t, p.pi);
                }
                out
            }
        }
    }
}
