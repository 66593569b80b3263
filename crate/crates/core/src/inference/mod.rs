//! Uncertainty for the IPW estimators: the stacked M-estimation sandwich and
//! the parametric bootstrap.

mod bootstrap;
mod sandwich;

pub use bootstrap::{parametric_bootstrap, BootstrapConfig, BootstrapResult, Replicate};
pub use sandwich::{
    sandwich_covariance, stacked_jacobian, stacked_scores, SandwichResult, ThetaVector,
};
