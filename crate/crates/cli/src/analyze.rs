use regmeta::inference::{parametric_bootstrap, sandwich_covariance, BootstrapConfig};
use regmeta::{dl_fit, fit, Family, FitConfig, MetaDataset, Orientation, PointEstimates};

use crate::args::{AnalyzeArgs, CiChoice, FamilyChoice};
use crate::error::CliError;
use crate::report::{AnalysisReport, DatasetSummary, MethodRow, SolverDiagnostics, SCHEMA};

pub fn load(path: &str) -> Result<MetaDataset, CliError> {
    MetaDataset::load_csv(path).map_err(CliError::Data)
}

pub fn check_level(level: f64) -> Result<(), CliError> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "--level must lie in (0, 1), got {level}"
        )))
    }
}

struct Scale(bool);

impl Scale {
    fn point(&self, v: f64) -> f64 {
        if self.0 {
            v.exp()
        } else {
            v
        }
    }

    fn interval(&self, ci: Option<(f64, f64)>) -> (Option<f64>, Option<f64>) {
        match ci {
            Some((lo, hi)) => (Some(self.point(lo)), Some(self.point(hi))),
            None => (None, None),
        }
    }
}

fn ipw_row(est: &PointEstimates, ci_kind: &str, scale: &Scale) -> MethodRow {
    let mut flags = Vec::new();
    if !est.converged {
        flags.push("not_converged".to_string());
    }
    if est.tau2_degenerate {
        flags.push("tau2_denominator_degenerate".to_string());
    }
    MethodRow {
        method: "IPW".into(),
        family: Some(est.family.name().into()),
        orientation: Some(est.orientation.to_string()),
        ci_kind: ci_kind.into(),
        mu: est.mu_hat,
        estimate: scale.point(est.mu_hat),
        ci_lower: None,
        ci_upper: None,
        p_value: None,
        tau2: est.tau2_hat,
        tau2_ci_lower: None,
        tau2_ci_upper: None,
        i2: est.i2_ipw,
        beta: est.beta_hat.clone(),
        beta_ci: vec![None; est.beta_hat.len()],
        converged: est.converged,
        flags,
    }
}

fn dl_row(ds: &MetaDataset, level: f64, scale: &Scale) -> MethodRow {
    let d = dl_fit(ds);
    let (lo, hi) = scale.interval(Some(d.ci_mu(level)));
    MethodRow {
        method: "DL".into(),
        family: None,
        orientation: None,
        ci_kind: "wald".into(),
        mu: d.mu_hat,
        estimate: scale.point(d.mu_hat),
        ci_lower: lo,
        ci_upper: hi,
        p_value: Some(d.p_value()),
        tau2: d.tau2_hat,
        tau2_ci_lower: None,
        tau2_ci_upper: None,
        i2: d.i2,
        beta: Vec::new(),
        beta_ci: Vec::new(),
        converged: true,
        flags: Vec::new(),
    }
}

pub fn families(choice: FamilyChoice) -> Vec<Family> {
    match choice {
        FamilyChoice::All => Family::ALL.to_vec(),
        FamilyChoice::One(f) => vec![f],
    }
}

pub fn run(args: &AnalyzeArgs) -> Result<AnalysisReport, CliError> {
    check_level(args.level)?;
    if args.boot_b == 0 && args.ci != CiChoice::Asymptotic {
        return Err(CliError::Usage("--boot-b must be at least 1".into()));
    }
    let ds = load(&args.data)?;
    let scale = Scale(args.exp);
    let orientation: Orientation = args.orientation;
    let mut rows = Vec::new();
    let mut diagnostics = Vec::new();
    if args.baseline_dl {
        rows.push(dl_row(&ds, args.level, &scale));
    }

    let mut fitted = 0;
    for family in families(args.family) {
        let config = FitConfig::new(family).with_orientation(orientation);
        let est = match fit(&ds, &config) {
            Ok(e) => e,
            Err(e) => {
                diagnostics.push(SolverDiagnostics {
                    family: family.name().into(),
                    iterations: 0,
                    residual: f64::NAN,
                    tolerance: f64::NAN,
                    converged: false,
                    at_bound: false,
                    tau2_degenerate: false,
                    bootstrap_failed: None,
                    error: Some(e.to_string()),
                });
                continue;
            }
        };
        fitted += usize::from(est.converged);
        let mut diag = SolverDiagnostics {
            family: family.name().into(),
            iterations: est.solver_report.iterations,
            residual: est.solver_report.residual,
            tolerance: est.solver_report.tolerance,
            converged: est.converged,
            at_bound: est.solver_report.at_bound,
            tau2_degenerate: est.tau2_degenerate,
            bootstrap_failed: None,
            error: None,
        };

        if !est.converged {
            rows.push(ipw_row(&est, "none", &scale));
            diagnostics.push(diag);
            continue;
        }

        if args.ci != CiChoice::Bootstrap {
            let mut row = ipw_row(&est, "asymptotic", &scale);
            match sandwich_covariance(&ds, &est, &config, args.level) {
                Ok(s) => {
                    (row.ci_lower, row.ci_upper) = scale.interval(Some(s.ci_mu()));
                    row.p_value = Some(s.wald_p_mu);
                    let (tlo, thi) = s.ci_tau2();
                    row.tau2_ci_lower = Some(tlo);
                    row.tau2_ci_upper = Some(thi);
                    row.beta_ci = s.ci_beta().iter().map(|c| Some(*c)).collect();
                    if s.tau_at_boundary {
                        row.flags.push("tau2_at_boundary".into());
                    }
                }
                Err(e) => row.flags.push(format!("sandwich: {e}")),
            }
            rows.push(row);
        }

        if args.ci != CiChoice::Asymptotic {
            let mut row = ipw_row(&est, "bootstrap", &scale);
            let boot = BootstrapConfig::new(args.boot_b, args.seed).with_level(args.level);
            match parametric_bootstrap(&ds, &est, &config, &boot) {
                Ok(b) => {
                    (row.ci_lower, row.ci_upper) = scale.interval(Some(b.ci_mu));
                    row.tau2_ci_lower = Some(b.ci_tau2.0);
                    row.tau2_ci_upper = Some(b.ci_tau2.1);
                    row.beta_ci = b.ci_beta.iter().map(|c| Some(*c)).collect();
                    if b.too_many_failures {
                        row.flags.push(format!(
                            "bootstrap_failures: {} of {}",
                            b.n_failed, b.b_replicates
                        ));
                    }
                    diag.bootstrap_failed = Some(b.n_failed);
                }
                Err(e) => row.flags.push(format!("bootstrap: {e}")),
            }
            rows.push(row);
        }
        diagnostics.push(diag);
    }

    if fitted == 0 && !args.baseline_dl {
        let reasons: Vec<String> = diagnostics
            .iter()
            .map(|d| match &d.error {
                Some(e) => format!("{}: {e}", d.family),
                None => format!(
                    "{}: no root (objective {:.3e}, tolerance {:.3e}{})",
                    d.family,
                    d.residual,
                    d.tolerance,
                    if d.at_bound {
                        ", at the parameter box"
                    } else {
                        ""
                    }
                ),
            })
            .collect();
        return Err(CliError::Numerical(reasons.join("; ")));
    }

    Ok(AnalysisReport {
        schema: SCHEMA,
        dataset: DatasetSummary {
            path: args.data.clone(),
            n_published: ds.n_published(),
            n_unpublished: ds.n_unpublished(),
            s_total: ds.s_total(),
        },
        level: args.level,
        seed: args.seed,
        boot_b: args.boot_b,
        exp: args.exp,
        rows,
        diagnostics,
    })
}
