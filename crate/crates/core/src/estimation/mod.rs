//! Point estimation: the DerSimonian-Laird baseline, the registry estimating
//! equations for the selection parameters, and the IPW estimators of the
//! overall mean and between-study variance.

mod dl;
mod equations;
mod ipw;
mod solver;

pub use dl::{dl_fit, DlEstimates};
#[cfg(test)]
pub(crate) use equations::u_beta_jacobian;
pub use equations::{u_beta, EstimatingEquationSpec, GValue};
pub use ipw::{
    estimates_at, fit, heterogeneity, ipw_fixed_mean, ipw_mean, ipw_tau2, FitConfig,
    PointEstimates, Tau2Estimate,
};
pub use solver::{
    solve_beta, solve_beta_1param, solve_beta_2param, tolerance_1param, tolerance_2param,
    SolverReport, BETA_BOX, BRACKET_EXPANSIONS, BRACKET_START,
};

pub(crate) use ipw::{mean_of, tau2_of, weighted};
