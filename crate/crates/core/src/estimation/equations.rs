use serde::{Deserialize, Serialize};

use crate::data::MetaDataset;
use crate::error::EstimationError;
use crate::selection::{Family, SelectionModel};

/// Choice of `g(n)` in the registry estimating equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EstimatingEquationSpec {
    /// `g(n) = sqrt(n)`.
    SqrtN,
    /// `g(n) = (1, sqrt(n))`.
    OneAndSqrtN,
}

impl EstimatingEquationSpec {
    pub fn for_family(family: Family) -> Self {
        match family.arity() {
            1 => Self::SqrtN,
            _ => Self::OneAndSqrtN,
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Self::SqrtN => 1,
            Self::OneAndSqrtN => 2,
        }
    }

    pub fn g(self, n: u64) -> GValue {
        let r = (n as f64).sqrt();
        match self {
            Self::SqrtN => GValue::One(r),
            Self::OneAndSqrtN => GValue::Two(1.0, r),
        }
    }

    pub(crate) fn check(self, model: &SelectionModel) -> Result<(), EstimationError> {
        if self.arity() != model.family.arity() || model.beta.len() != self.arity() {
            return Err(EstimationError::Arity {
                family: model.family.name(),
                expected: self.arity(),
                got: model.beta.len(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GValue {
    One(f64),
    Two(f64, f64),
}

impl GValue {
    pub(crate) fn add_scaled(self, scale: f64, out: &mut [f64]) {
        match self {
            GValue::One(a) => out[0] += scale * a,
            GValue::Two(a, b) => {
                out[0] += scale * a;
                out[1] += scale * b;
            }
        }
    }
}

/// `U(beta) = sum_i {1 - D_i / pi_i(beta)} g(n_i)` over all S studies.
///
/// Registry-only rows contribute `g(n_i)` and never evaluate the selection
/// function.
pub fn u_beta(
    dataset: &MetaDataset,
    model: &SelectionModel,
    spec: EstimatingEquationSpec,
) -> Result<Vec<f64>, EstimationError> {
    spec.check(model)?;
    Ok(u_beta_unchecked(dataset, model, spec))
}

pub(crate) fn u_beta_unchecked(
    dataset: &MetaDataset,
    model: &SelectionModel,
    spec: EstimatingEquationSpec,
) -> Vec<f64> {
    let mut u = vec![0.0; spec.arity()];
    for s in dataset.studies() {
        let factor = match s.estimate() {
            Some(e) => 1.0 - 1.0 / model.prob_for(e.effect, e.se),
            None => 1.0,
        };
        spec.g(s.n_total()).add_scaled(factor, &mut u);
    }
    u
}

/// Analytic `dU/dbeta`, row-major `arity x arity`.
pub(crate) fn u_beta_jacobian(
    dataset: &MetaDataset,
    model: &SelectionModel,
    spec: EstimatingEquationSpec,
) -> Vec<f64> {
    let k = spec.arity();
    let mut jac = vec![0.0; k * k];
    for (s, e) in dataset.published() {
        let t = model.t_stat(e.effect, e.se);
        let p = model.prob(t, e.se);
        let grad = model.dprob_dbeta(t, e.se);
        let mut g = vec![0.0; k];
        spec.g(s.n_total()).add_scaled(1.0, &mut g);
        for r in 0..k {
            for c in 0..k {
                jac[r * k + c] += g[r] * grad[c] / (p * p);
            }
        }
    }
    jac
}
