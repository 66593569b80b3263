//! Monte Carlo study: simulated trial populations, selective publication,
//! and performance metrics for the estimators.

mod generate;
mod scenario;

pub use generate::{
    apply_selection, generate_population, treated_rate, Design, GenerativeConfig, Population,
    StudyTruth, DEFAULT_MU, MIN_STUDY_SIZE,
};
pub use scenario::{
    full_grid, run_replicate, run_scenario, summarize, write_metrics_csv, CiKind, MethodSpec,
    Outcome, Parameter, ReplicateOutcome, ScenarioConfig, ScenarioMetrics, ScenarioReport,
};
