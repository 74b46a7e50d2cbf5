//! Levenberg-Marquardt with Marquardt diagonal scaling and a central
//! finite-difference Jacobian.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;

pub trait LeastSquaresProblem {
    fn residuals(&self, params: &DVector<f64>) -> Result<DVector<f64>>;
}

#[derive(Debug, Clone, Copy)]
pub struct LmOptions {
    pub max_iterations: usize,
    pub initial_lambda: f64,
    pub lambda_up: f64,
    pub lambda_down: f64,
    /// Relative cost decrease below which an accepted step counts as converged.
    pub relative_tolerance: f64,
    /// Finite-difference step is `fd_step * max(|p|, 1)`.
    pub fd_step: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            initial_lambda: 1e-3,
            lambda_up: 10.0,
            lambda_down: 10.0,
            relative_tolerance: 1e-10,
            fd_step: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmReport {
    pub params: DVector<f64>,
    pub initial_cost: f64,
    pub final_cost: f64,
    /// Cost after each accepted step, starting with the initial cost.
    pub accepted_costs: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn cost(r: &DVector<f64>) -> f64 {
    0.5 * r.norm_squared()
}

fn jacobian<P: LeastSquaresProblem>(
    problem: &P,
    params: &DVector<f64>,
    n_res: usize,
    step: f64,
) -> Result<DMatrix<f64>> {
    let mut j = DMatrix::zeros(n_res, params.len());
    let mut p = params.clone();
    for i in 0..params.len() {
        let h = step * params[i].abs().max(1.0);
        p[i] = params[i] + h;
        let plus = problem.residuals(&p)?;
        p[i] = params[i] - h;
        let minus = problem.residuals(&p)?;
        p[i] = params[i];
        j.set_column(i, &((plus - minus) / (2.0 * h)));
    }
    Ok(j)
}

/// Minimizes `½‖r(p)‖²`. Trial steps whose residuals cannot be evaluated
/// are rejected like any step that increases the cost.
pub fn levenberg_marquardt<P: LeastSquaresProblem>(
    problem: &P,
    initial: DVector<f64>,
    opts: &LmOptions,
) -> Result<LmReport> {
    let mut params = initial;
    let mut r = problem.residuals(&params)?;
    let initial_cost = cost(&r);
    let mut current = initial_cost;
    let mut accepted = vec![current];
    let mut lambda = opts.initial_lambda;
    let mut converged = false;
    let mut iterations = 0;
    let mut j = jacobian(problem, &params, r.len(), opts.fd_step)?;

    while iterations < opts.max_iterations && !converged {
        iterations += 1;
        if current == 0.0 {
            converged = true;
            break;
        }
        let jtj = j.transpose() * &j;
        let g = j.transpose() * &r;
        let max_diag = jtj.diagonal().amax().max(f64::MIN_POSITIVE);

        let mut stepped = false;
        while lambda < 1e16 {
            let mut a = jtj.clone();
            for i in 0..a.nrows() {
                a[(i, i)] += lambda * jtj[(i, i)].max(1e-12 * max_diag);
            }
            let Some(chol) = a.cholesky() else {
                lambda *= opts.lambda_up;
                continue;
            };
            let delta = chol.solve(&(-&g));
            let trial = &params + &delta;
            let trial_r = match problem.residuals(&trial) {
                Ok(tr) if tr.iter().all(|v| v.is_finite()) => tr,
                _ => {
                    lambda *= opts.lambda_up;
                    continue;
                }
            };
            let trial_cost = cost(&trial_r);
            if trial_cost < current {
                let rel = (current - trial_cost) / current;
                params = trial;
                r = trial_r;
                current = trial_cost;
                accepted.push(current);
                lambda = (lambda / opts.lambda_down).max(1e-15);
                if rel < opts.relative_tolerance {
                    converged = true;
                }
                stepped = true;
                break;
            }
            lambda *= opts.lambda_up;
        }
        if !stepped {
            // no descent direction left at machine precision
            converged = true;
            break;
        }
        if !converged {
            j = jacobian(problem, &params, r.len(), opts.fd_step)?;
        }
    }

    Ok(LmReport {
        params,
        initial_cost,
        final_cost: current,
        accepted_costs: accepted,
        iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Rosenbrock;

    impl LeastSquaresProblem for Rosenbrock {
        fn residuals(&self, p: &DVector<f64>) -> Result<DVector<f64>> {
            Ok(DVector::from_vec(vec![10.0 * (p[1] - p[0] * p[0]), 1.0 - p[0]]))
        }
    }

    struct ExpFit {
        t: Vec<f64>,
        y: Vec<f64>,
    }

    impl LeastSquaresProblem for ExpFit {
        fn residuals(&self, p: &DVector<f64>) -> Result<DVector<f64>> {
            Ok(DVector::from_iterator(
                self.t.len(),
                self.t.iter().zip(&self.y).map(|(t, y)| p[0] * (p[1] * t).exp() - y),
            ))
        }
    }

    #[test]
    fn solves_rosenbrock() {
        let rep = levenberg_marquardt(&Rosenbrock, DVector::from_vec(vec![-1.2, 1.0]), &LmOptions::default()).unwrap();
        assert!((rep.params[0] - 1.0).abs() < 1e-6);
        assert!((rep.params[1] - 1.0).abs() < 1e-6);
        assert!(rep.converged);
    }

    #[test]
    fn accepted_costs_never_increase() {
        let t: Vec<f64> = (0..20).map(|i| i as f64 * 0.1).collect();
        let y: Vec<f64> = t.iter().map(|t| 2.5 * (-1.3 * t).exp()).collect();
        let rep = levenberg_marquardt(&ExpFit { t, y }, DVector::from_vec(vec![1.0, 0.0]), &LmOptions::default()).unwrap();
        assert!(rep.accepted_costs.windows(2).all(|w| w[1] <= w[0]));
        assert!((rep.params[0] - 2.5).abs() < 1e-8);
        assert!((rep.params[1] + 1.3).abs() < 1e-8);
    }
}
