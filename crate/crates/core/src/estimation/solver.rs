use serde::{Deserialize, Serialize};

use crate::data::MetaDataset;
use crate::error::EstimationError;
use crate::optim::NelderMead;
use crate::selection::{Family, Orientation, SelectionModel};

use super::equations::{u_beta_jacobian, u_beta_unchecked, EstimatingEquationSpec};

/// Initial bracket half-width for the one-parameter root search.
pub const BRACKET_START: f64 = 50.0;
pub const BRACKET_EXPANSIONS: usize = 8;
/// Box bound on both components in the two-parameter search.
pub const BETA_BOX: f64 = 20.0;
const START_GRID: [f64; 3] = [-1.0, 0.0, 1.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub iterations: usize,
    /// Final `|U|` (one parameter) or `|U_0| + |U_1|` (two parameters).
    pub residual: f64,
    pub tolerance: f64,
    pub converged: bool,
    /// Two-parameter search ended on the box boundary.
    pub at_bound: bool,
}

/// Residual tolerance for the one-parameter equation.
pub fn tolerance_1param(dataset: &MetaDataset) -> f64 {
    1e-8 * dataset.sum_sqrt_n()
}

/// Objective tolerance for the two-parameter search.
pub fn tolerance_2param(dataset: &MetaDataset) -> f64 {
    1e-6 * (dataset.s_total() as f64 + dataset.sum_sqrt_n())
}

/// Root of the monotone one-parameter estimating equation by bracketing,
/// bisection and a short Newton polish.
pub fn solve_beta_1param(
    dataset: &MetaDataset,
    family: Family,
    orientation: Orientation,
    spec: EstimatingEquationSpec,
) -> Result<(f64, SolverReport), EstimationError> {
    if family.arity() != 1 || spec != EstimatingEquationSpec::SqrtN {
        return Err(EstimationError::Arity {
            family: family.name(),
            expected: family.arity(),
            got: spec.arity(),
        });
    }
    let model = SelectionModel::with_orientation(family, vec![0.0], orientation)?;
    let u = |b: f64| u_beta_unchecked(dataset, &model.at(&[b]), spec)[0];
    let du = |b: f64| u_beta_jacobian(dataset, &model.at(&[b]), spec)[0];
    let tol = tolerance_1param(dataset);

    let u0 = u(0.0);
    if u0.abs() <= tol {
        return Ok((
            0.0,
            SolverReport {
                iterations: 0,
                residual: u0.abs(),
                tolerance: tol,
                converged: true,
                at_bound: false,
            },
        ));
    }

    let (mut lo, mut hi) = (-BRACKET_START, BRACKET_START);
    let (mut ulo, mut uhi) = (u(lo), u(hi));
    let mut expansions = 0;
    while ulo.signum() == uhi.signum() && ulo != 0.0 && uhi != 0.0 {
        if expansions == BRACKET_EXPANSIONS {
            return Err(EstimationError::NoRoot { lo, hi });
        }
        lo *= 2.0;
        hi *= 2.0;
        ulo = u(lo);
        uhi = u(hi);
        expansions += 1;
    }

    let mut iterations = 0;
    if ulo == 0.0 {
        hi = lo;
    } else if uhi == 0.0 {
        lo = hi;
    }
    while hi - lo > 1e-10 {
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        let um = u(mid);
        if um == 0.0 {
            lo = mid;
            hi = mid;
            break;
        }
        if um.signum() == ulo.signum() {
            lo = mid;
            ulo = um;
        } else {
            hi = mid;
        }
    }

    let mut beta = 0.5 * (lo + hi);
    let mut resid = u(beta);
    for _ in 0..5 {
        if resid.abs() <= f64::EPSILON * tol {
            break;
        }
        let slope = du(beta);
        if slope == 0.0 || !slope.is_finite() {
            break;
        }
        let cand = beta + resid / slope;
        if !(lo..=hi).contains(&cand) {
            break;
        }
        let rc = u(cand);
        iterations += 1;
        if rc.abs() >= resid.abs() {
            break;
        }
        beta = cand;
        resid = rc;
    }
    Ok((
        beta,
        SolverReport {
            iterations,
            residual: resid.abs(),
            tolerance: tol,
            converged: resid.abs() <= tol,
            at_bound: false,
        },
    ))
}

/// Minimise `|U_0| + |U_1|` by multi-start simplex search inside the box.
///
/// Always returns the best point found; `converged` is false when the
/// objective stays above tolerance or the best point sits on the box.
pub fn solve_beta_2param(
    dataset: &MetaDataset,
    family: Family,
    orientation: Orientation,
    spec: EstimatingEquationSpec,
) -> Result<(Vec<f64>, SolverReport), EstimationError> {
    if family.arity() != 2 || spec != EstimatingEquationSpec::OneAndSqrtN {
        return Err(EstimationError::Arity {
            family: family.name(),
            expected: family.arity(),
            got: spec.arity(),
        });
    }
    let model = SelectionModel::with_orientation(family, vec![0.0, 0.0], orientation)?;
    let objective = |b: &[f64]| -> f64 {
        u_beta_unchecked(dataset, &model.at(b), spec)
            .iter()
            .map(|v| v.abs())
            .sum()
    };
    let bounds = [(-BETA_BOX, BETA_BOX); 2];
    let nm = NelderMead::default();
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut iterations = 0;
    for &b0 in &START_GRID {
        for &b1 in &START_GRID {
            let m = nm.minimize(objective, &[b0, b1], &bounds);
            iterations += m.iterations;
            if best.as_ref().is_none_or(|(_, f)| m.f < *f) {
                best = Some((m.x, m.f));
            }
        }
    }
    let (mut beta, mut fbest) = best.expect("non-empty start grid");

    // Newton polish on U(beta) = 0; kept only when it lowers the objective.
    for _ in 0..20 {
        if fbest == 0.0 {
            break;
        }
        let u = u_beta_unchecked(dataset, &model.at(&beta), spec);
        let j = u_beta_jacobian(dataset, &model.at(&beta), spec);
        let det = j[0] * j[3] - j[1] * j[2];
        if det == 0.0 || !det.is_finite() {
            break;
        }
        let step = [
            (j[3] * u[0] - j[1] * u[1]) / det,
            (-j[2] * u[0] + j[0] * u[1]) / det,
        ];
        let mut accepted = false;
        let mut scale = 1.0;
        for _ in 0..12 {
            let cand = [beta[0] - scale * step[0], beta[1] - scale * step[1]];
            if cand.iter().all(|c| c.abs() <= BETA_BOX) {
                let fc = objective(&cand);
                if fc < fbest {
                    beta = cand.to_vec();
                    fbest = fc;
                    accepted = true;
                    break;
                }
            }
            scale *= 0.5;
        }
        iterations += 1;
        if !accepted {
            break;
        }
    }

    let tol = tolerance_2param(dataset);
    let at_bound = beta.iter().any(|b| b.abs() >= BETA_BOX - 1e-8);
    Ok((
        beta,
        SolverReport {
            iterations,
            residual: fbest,
            tolerance: tol,
            converged: fbest <= tol && !at_bound,
            at_bound,
        },
    ))
}

/// Dispatch on the family's arity.
pub fn solve_beta(
    dataset: &MetaDataset,
    family: Family,
    orientation: Orientation,
) -> Result<(Vec<f64>, SolverReport), EstimationError> {
    let spec = EstimatingEquationSpec::for_family(family);
    match family.arity() {
        1 => solve_beta_1param(dataset, family, orientation, spec).map(|(b, r)| (vec![b], r)),
        _ => solve_beta_2param(dataset, family, orientation, spec),
    }
}
