//! Box-constrained Nelder-Mead simplex search.
//!
//! Points leaving the box are projected back onto it. After the simplex
//! collapses the search restarts from the best vertex with a fresh simplex,
//! which lets it escape the false stalls common on kinked objectives.

#[derive(Debug, Clone)]
pub struct NelderMead {
    pub max_iter: usize,
    pub restarts: usize,
    pub initial_step: f64,
    pub xtol: f64,
    pub ftol: f64,
}

impl Default for NelderMead {
    fn default() -> Self {
        Self {
            max_iter: 4000,
            restarts: 4,
            initial_step: 0.5,
            xtol: 1e-11,
            ftol: 1e-15,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
}

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

fn project(x: &mut [f64], bounds: &[(f64, f64)]) {
    for (xi, &(lo, hi)) in x.iter_mut().zip(bounds) {
        *xi = xi.clamp(lo, hi);
    }
}

impl NelderMead {
    pub fn minimize<F>(&self, f: F, x0: &[f64], bounds: &[(f64, f64)]) -> Minimum
    where
        F: Fn(&[f64]) -> f64,
    {
        assert_eq!(x0.len(), bounds.len());
        let mut best = self.run(&f, x0, bounds);
        for _ in 0..self.restarts {
            let next = self.run(&f, &best.x, bounds);
            let improved = next.f < best.f - 1e-15 * best.f.abs().max(1e-300);
            let iterations = best.iterations + next.iterations;
            if next.f <= best.f {
                best = Minimum { iterations, ..next };
            } else {
                best.iterations = iterations;
            }
            if !improved {
                break;
            }
        }
        best
    }

    fn run<F>(&self, f: &F, x0: &[f64], bounds: &[(f64, f64)]) -> Minimum
    where
        F: Fn(&[f64]) -> f64,
    {
        let n = x0.len();
        let mut start = x0.to_vec();
        project(&mut start, bounds);
        let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
        simplex.push((start.clone(), f(&start)));
        for k in 0..n {
            let mut v = start.clone();
            let (lo, hi) = bounds[k];
            let step = self.initial_step * (1.0 + start[k].abs()).min(2.0);
            v[k] = if start[k] + step <= hi {
                start[k] + step
            } else {
                start[k] - step
            };
            v[k] = v[k].clamp(lo, hi);
            let fv = f(&v);
            simplex.push((v, fv));
        }

        let mut iterations = 0;
        while iterations < self.max_iter {
            iterations += 1;
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            let f_best = simplex[0].1;
            let f_worst = simplex[n].1;
            let spread = simplex
                .iter()
                .skip(1)
                .flat_map(|(v, _)| v.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
                .fold(0.0, f64::max);
            if (f_worst - f_best).abs() <= self.ftol && spread <= self.xtol {
                break;
            }
            if spread <= self.xtol * 1e-3 {
                break;
            }

            let mut centroid = vec![0.0; n];
            for (v, _) in &simplex[..n] {
                for (c, vi) in centroid.iter_mut().zip(v) {
                    *c += vi / n as f64;
                }
            }
            let toward = |coef: f64| -> Vec<f64> {
                let mut p: Vec<f64> = centroid
                    .iter()
                    .zip(&simplex[n].0)
                    .map(|(c, w)| c + coef * (c - w))
                    .collect();
                project(&mut p, bounds);
                p
            };

            let xr = toward(REFLECT);
            let fr = f(&xr);
            if fr < simplex[0].1 {
                let xe = toward(EXPAND);
                let fe = f(&xe);
                simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
                continue;
            }
            if fr < simplex[n - 1].1 {
                simplex[n] = (xr, fr);
                continue;
            }
            let (xc, fc) = if fr < simplex[n].1 {
                let xc = toward(CONTRACT);
                let fc = f(&xc);
                (xc, fc)
            } else {
                let xc = toward(-CONTRACT);
                let fc = f(&xc);
                (xc, fc)
            };
            if fc < fr.min(simplex[n].1) {
                simplex[n] = (xc, fc);
                continue;
            }
            let x_best = simplex[0].0.clone();
            for (v, fv) in simplex.iter_mut().skip(1) {
                for (vi, bi) in v.iter_mut().zip(&x_best) {
                    *vi = bi + SHRINK * (*vi - bi);
                }
                *fv = f(v);
            }
        }
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (x, fx) = simplex.swap_remove(0);
        Minimum {
            x,
            f: fx,
            iterations,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let m = NelderMead::default().minimize(f, &[-1.2, 1.0], &[(-5.0, 5.0), (-5.0, 5.0)]);
        assert!((m.x[0] - 1.0).abs() < 1e-6, "{m:?}");
        assert!((m.x[1] - 1.0).abs() < 1e-6, "{m:?}");
    }

    #[test]
    fn l1_kink_minimum() {
        let f = |x: &[f64]| (x[0] - 0.3).abs() + (x[0] + 2.0 * x[1] - 1.0).abs();
        let m = NelderMead::default().minimize(f, &[0.0, 0.0], &[(-20.0, 20.0), (-20.0, 20.0)]);
        assert!(m.f < 1e-9, "{m:?}");
    }

    #[test]
    fn respects_box() {
        let f = |x: &[f64]| -x[0] + x[1] * x[1];
        let m = NelderMead::default().minimize(f, &[0.0, 1.0], &[(-2.0, 3.0), (-1.0, 1.0)]);
        assert_eq!(m.x[0], 3.0);
        assert!(m.x[1].abs() < 1e-6);
    }
}
