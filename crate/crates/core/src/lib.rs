//! Publication-bias-adjusted random-effects meta-analysis.
//!
//! Published studies are reweighted by the inverse of a fitted selection
//! probability. The selection parameters are calibrated against the sample
//! sizes of registered but unpublished studies.

pub mod data;
pub mod error;
pub mod estimation;
pub mod inference;
pub mod normal;
pub mod optim;
pub mod rng;
pub mod selection;
pub mod simulation;

pub use data::{effect_from_counts, Estimate, MetaDataset, StudyRecord, TwoByTwoCounts};
pub use error::{DataError, EstimationError, SimulationError};
pub use estimation::{dl_fit, fit, DlEstimates, EstimatingEquationSpec, FitConfig, PointEstimates};
pub use inference::{
    parametric_bootstrap, sandwich_covariance, BootstrapConfig, BootstrapResult, SandwichResult,
};
pub use selection::{Family, Orientation, SelectionModel};
