//! Nelder-Mead simplex minimization on unconstrained coordinates.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NelderMeadOptions {
    /// Edge length of the initial simplex along each axis.
    pub initial_step: f64,
    /// Stop when the spread of function values is at most this.
    pub f_tol: f64,
    /// ...and the simplex fits within this distance of the best vertex.
    pub x_tol: f64,
    pub max_evals: usize,
    /// Rebuild the simplex around the best vertex this many times after convergence.
    pub restarts: usize,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self { initial_step: 1.0, f_tol: 1e-9, x_tol: 1e-7, max_evals: 4000, restarts: 1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

/// Minimizes `f` from `x0`. Non-finite values are treated as `+∞`.
pub fn minimize(f: impl Fn(&[f64]) -> f64, x0: &[f64], opts: &NelderMeadOptions) -> NelderMeadResult {
    let eval = |x: &[f64]| {
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    let mut total = NelderMeadResult { x: x0.to_vec(), f: eval(x0), iterations: 0, evaluations: 1, converged: false };
    for _ in 0..=opts.restarts {
        let budget = opts.max_evals.saturating_sub(total.evaluations);
        if budget == 0 {
            break;
        }
        let r = run(&eval, &total.x, opts, budget);
        total.iterations += r.iterations;
        total.evaluations += r.evaluations;
        total.converged = r.converged;
        let improved = r.f < total.f;
        if r.f <= total.f {
            total.x = r.x;
            total.f = r.f;
        }
        if !r.converged || !improved {
            break;
        }
    }
    total
}

fn run(f: &impl Fn(&[f64]) -> f64, x0: &[f64], opts: &NelderMeadOptions, budget: usize) -> NelderMeadResult {
    let n = x0.len();
    let mut evals = 0;
    let call = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        f(x)
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), call(x0, &mut evals)));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += opts.initial_step;
        let v = call(&x, &mut evals);
        simplex.push((x, v));
    }
    let mut iterations = 0;
    let mut converged = false;
    while evals < budget {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[n].1;
        let spread = if worst.is_finite() { worst - best } else { f64::INFINITY };
        let size = simplex[1..]
            .iter()
            .map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if spread <= opts.f_tol && size <= opts.x_tol {
            converged = true;
            break;
        }
        if n == 0 {
            converged = true;
            break;
        }
        iterations += 1;
        let centroid: Vec<f64> =
            (0..n).map(|j| simplex[..n].iter().map(|(x, _)| x[j]).sum::<f64>() / n as f64).collect();
        let along = |t: f64| -> Vec<f64> { (0..n).map(|j| centroid[j] + t * (simplex[n].0[j] - centroid[j])).collect() };
        let xr = along(-1.0);
        let fr = call(&xr, &mut evals);
        if fr < simplex[0].1 {
            let xe = along(-2.0);
            let fe = call(&xe, &mut evals);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr < simplex[n].1 {
                let xc = along(-0.5);
                let fc = call(&xc, &mut evals);
                (xc, fc)
            } else {
                let xc = along(0.5);
                let fc = call(&xc, &mut evals);
                (xc, fc)
            };
            if fc < fr.min(simplex[n].1) {
                simplex[n] = (xc, fc);
            } else {
                let x_best = simplex[0].0.clone();
                for v in simplex[1..].iter_mut() {
                    let xs: Vec<f64> = x_best.iter().zip(&v.0).map(|(b, x)| b + 0.5 * (x - b)).collect();
                    let fs = call(&xs, &mut evals);
                    *v = (xs, fs);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, f) = simplex.swap_remove(0);
    NelderMeadResult { x, f, iterations, evaluations: evals, converged }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let opts = NelderMeadOptions { max_evals: 10_000, f_tol: 1e-14, x_tol: 1e-10, ..Default::default() };
        let r = minimize(f, &[-1.2, 1.0], &opts);
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-5 && (r.x[1] - 1.0).abs() < 1e-5, "{:?}", r.x);
    }

    #[test]
    fn never_worse_than_start_and_survives_nan() {
        let f = |x: &[f64]| if x[0] > 0.5 { f64::NAN } else { (x[0] + 1.0).powi(2) + x[1].abs() };
        let r = minimize(f, &[0.0, 0.0], &NelderMeadOptions::default());
        assert!(r.f <= 1.0);
        assert!((r.x[0] + 1.0).abs() < 1e-3);
    }

    #[test]
    fn respects_budget() {
        let r = minimize(|x: &[f64]| x.iter().map(|v| v * v).sum(), &[3.0; 5], &NelderMeadOptions {
            max_evals: 20,
            ..Default::default()
        });
        assert!(r.evaluations <= 20 + 6);
        assert!(!r.converged);
    }
}
