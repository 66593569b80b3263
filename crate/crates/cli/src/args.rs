use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use regmeta::{Family, Orientation};

#[derive(Parser, Debug)]
#[command(
    name = "regmeta",
    version,
    about = "Publication-bias-adjusted meta-analysis calibrated on trial registries"
)]
pub struct Cli {
    /// Worker threads for bootstrap and simulation (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Fit the IPW estimators (and optionally DL) to a dataset.
    Analyze(AnalyzeArgs),
    /// Evaluate a fitted selection function over a grid of t values.
    SelectionCurve(CurveArgs),
    /// Run Monte Carlo scenarios and write the metrics table.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FamilyChoice {
    All,
    One(Family),
}

impl FromStr for FamilyChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("all") {
            Ok(FamilyChoice::All)
        } else {
            s.parse::<Family>()
                .map(FamilyChoice::One)
                .map_err(|e| e.to_string())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CiChoice {
    Asymptotic,
    Bootstrap,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Table,
}

#[derive(Args, Debug, Clone)]
pub struct AnalyzeArgs {
    /// Study CSV (summary or raw-count schema).
    #[arg(long)]
    pub data: String,
    /// logistic1, mlogistic1, probit2, logistic2 or all.
    #[arg(long, default_value = "all")]
    pub family: FamilyChoice,
    #[arg(long, value_enum, default_value_t = CiChoice::Asymptotic)]
    pub ci: CiChoice,
    #[arg(long, default_value_t = 1000)]
    pub boot_b: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    /// Report mu and its interval on the odds-ratio scale.
    #[arg(long)]
    pub exp: bool,
    /// Add the unadjusted DerSimonian-Laird row.
    #[arg(long)]
    pub baseline_dl: bool,
    /// Sign convention for t: natural (y / se) or reversed (-y / se).
    #[arg(long, default_value = "natural")]
    pub orientation: Orientation,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
}

/// Evenly spaced grid `lo:hi:step`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TRange {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl TRange {
    pub fn points(&self) -> Vec<f64> {
        let n = ((self.hi - self.lo) / self.step + 1e-9).floor() as usize;
        (0..=n).map(|i| self.lo + i as f64 * self.step).collect()
    }
}

impl FromStr for TRange {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(format!("expected lo:hi:step, got {s:?}"));
        }
        let num = |p: &str| {
            p.trim()
                .parse::<f64>()
                .map_err(|e| format!("{p:?}: {e}"))
                .and_then(|v| {
                    if v.is_finite() {
                        Ok(v)
                    } else {
                        Err(format!("{p:?} is not finite"))
                    }
                })
        };
        let (lo, hi, step) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
        if step.is_nan() || step <= 0.0 || hi < lo {
            return Err(format!("need lo <= hi and step > 0, got {s:?}"));
        }
        if (hi - lo) / step > 1e7 {
            return Err("grid has more than 10^7 points".into());
        }
        Ok(TRange { lo, hi, step })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CurveFormat {
    Csv,
    Json,
}

#[derive(Args, Debug, Clone)]
pub struct CurveArgs {
    #[arg(long)]
    pub data: String,
    #[arg(long)]
    pub family: Family,
    #[arg(long, default_value = "natural")]
    pub orientation: Orientation,
    #[arg(long, default_value = "-3:3:0.01", allow_hyphen_values = true)]
    pub t_range: TRange,
    /// Standard error used by the modified logistic family; defaults to the
    /// median published standard error.
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long, value_enum, default_value_t = CiChoice::Asymptotic)]
    pub ci: CiChoice,
    #[arg(long, default_value_t = 1000)]
    pub boot_b: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    #[arg(long, value_enum, default_value_t = CurveFormat::Csv)]
    pub format: CurveFormat,
}

#[derive(Args, Debug, Clone)]
pub struct SimulateArgs {
    /// Scenario JSON: one scenario object or an array of them.
    #[arg(long, conflicts_with_all = ["design", "full"])]
    pub config: Option<String>,
    /// Metrics CSV destination (stdout when omitted).
    #[arg(long)]
    pub out: Option<String>,
    /// Every design at S in {15, 25, 50, 100} and tau in {0.05, 0.15, 0.30}.
    #[arg(long, conflicts_with = "design")]
    pub full: bool,
    /// Built-in design 1-4.
    #[arg(long)]
    pub design: Option<usize>,
    #[arg(long, default_value_t = 50)]
    pub s_total: usize,
    #[arg(long, default_value_t = 0.15)]
    pub tau: f64,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long, default_value_t = 1000)]
    pub replicates: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 1000)]
    pub boot_b: usize,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    /// Skip the bootstrap methods (much faster).
    #[arg(long)]
    pub no_bootstrap: bool,
    /// Also write the per-scenario reports as JSON.
    #[arg(long)]
    pub json: Option<String>,
}
