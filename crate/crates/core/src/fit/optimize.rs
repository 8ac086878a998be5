//! Bounded local least-squares minimization.
//!
//! A Levenberg-Marquardt trust-region iteration on the residual vector with
//! forward finite-difference Jacobians (relative step on the parameters),
//! simple bound projection, and optional log-space parameterization for
//! positive scale parameters. Accepted iterations are strictly monotone in
//! the objective, and evaluations are deterministic regardless of the number
//! of threads (Jacobian columns are independent and reduced in index order).

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};

/// Parameter-space mapping used by the optimizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamTransform {
    /// Optimize ln(theta): natural for positive scales spanning decades.
    Log,
    Linear,
}

/// Optimizer stop thresholds and budgets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerSettings {
    pub max_iters: usize,
    /// Relative forward-difference step on theta.
    pub fd_step: f64,
    pub ftol: f64,
    pub xtol: f64,
    pub gtol: f64,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        OptimizerSettings { max_iters: 80, fd_step: 1e-6, ftol: 1e-10, xtol: 1e-9, gtol: 1e-10 }
    }
}

/// One bounded local fit: start, bounds, transforms, and budgets.
#[derive(Debug, Clone)]
pub struct FitProblem {
    pub names: Vec<String>,
    pub theta0: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub transform: Vec<ParamTransform>,
    pub settings: OptimizerSettings,
}

impl FitProblem {
    /// Log-space problem with bounds [theta0/factor, theta0*factor].
    pub fn positive_scales(names: Vec<String>, theta0: Vec<f64>, bounds_factor: f64, settings: OptimizerSettings) -> Result<Self> {
        for (name, &v) in names.iter().zip(&theta0) {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("start value for `{name}` must be positive, got {v}")));
            }
        }
        let lower = theta0.iter().map(|v| v / bounds_factor).collect();
        let upper = theta0.iter().map(|v| v * bounds_factor).collect();
        let transform = vec![ParamTransform::Log; theta0.len()];
        Ok(FitProblem { names, theta0, lower, upper, transform, settings })
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.theta0.len();
        if p == 0 {
            return Err(Error::config("empty parameter vector"));
        }
        if self.lower.len() != p || self.upper.len() != p || self.transform.len() != p {
            return Err(Error::config("bounds/transform length mismatch"));
        }
        for i in 0..p {
            if !(self.lower[i] <= self.theta0[i] && self.theta0[i] <= self.upper[i]) {
                return Err(Error::config(format!(
                    "start value {} for `{}` outside bounds [{}, {}]",
                    self.theta0[i], self.names[i], self.lower[i], self.upper[i]
                )));
            }
            if self.transform[i] == ParamTransform::Log && !(self.lower[i] > 0.0) {
                return Err(Error::config(format!(
                    "log-space parameter `{}` needs a positive lower bound",
                    self.names[i]
                )));
            }
        }
        Ok(())
    }
}

/// Outcome of one residual evaluation.
#[derive(Debug, Clone)]
pub enum Evaluation {
    Residuals(Vec<f64>),
    /// The simulation could not cover the data span (cutoff inside a
    /// segment); the optimizer retreats from such trials.
    Penalty(f64),
}

/// Objective callback: residual vector at theta (physical space).
pub trait ResidualFn: Sync {
    fn eval(&self, theta: &[f64]) -> Evaluation;
}

impl<F: Fn(&[f64]) -> Evaluation + Sync> ResidualFn for F {
    fn eval(&self, theta: &[f64]) -> Evaluation {
        self(theta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitStatus {
    /// Objective improvement fell below ftol.
    ObjectiveTol,
    /// Accepted step shrank below xtol.
    StepTol,
    /// Scaled gradient norm fell below gtol.
    GradientTol,
    /// Iteration budget exhausted; best-so-far returned.
    MaxIterations,
}

impl std::fmt::Display for FitStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            FitStatus::ObjectiveTol => "objective-tolerance",
            FitStatus::StepTol => "step-tolerance",
            FitStatus::GradientTol => "gradient-tolerance",
            FitStatus::MaxIterations => "max-iterations",
        };
        f.write_str(s)
    }
}

/// Result of one bounded local fit.
#[derive(Debug, Clone, Serialize)]
pub struct FitResult {
    pub names: Vec<String>,
    pub theta: Vec<f64>,
    pub objective: f64,
    /// Root-mean-squared voltage error [mV] of the final residuals, assuming
    /// uniform weights.
    pub rmse_mv: f64,
    pub iterations: usize,
    pub n_evals: usize,
    pub wall_time_s: f64,
    pub status: FitStatus,
    /// Objective after each accepted iteration (non-increasing).
    pub history: Vec<f64>,
}

fn to_internal(theta: &[f64], tf: &[ParamTransform]) -> Vec<f64> {
    theta.iter().zip(tf).map(|(&v, t)| match t {
        ParamTransform::Log => v.ln(),
        ParamTransform::Linear => v,
    }).collect()
}

fn to_physical(x: &[f64], tf: &[ParamTransform]) -> Vec<f64> {
    x.iter().zip(tf).map(|(&v, t)| match t {
        ParamTransform::Log => v.exp(),
        ParamTransform::Linear => v,
    }).collect()
}

fn objective_of(ev: &Evaluation) -> f64 {
    match ev {
        Evaluation::Residuals(r) => r.iter().map(|v| v * v).sum(),
        Evaluation::Penalty(p) => *p,
    }
}

/// Bounded Levenberg-Marquardt minimization of `sum(residuals^2)`.
pub fn optimize(problem: &FitProblem, residuals: &dyn ResidualFn) -> Result<FitResult> {
    problem.validate()?;
    let start_time = std::time::Instant::now();
    let p = problem.theta0.len();
    let tf = &problem.transform;
    let lo = to_internal(&problem.lower, tf);
    let hi = to_internal(&problem.upper, tf);
    let clamp = |x: &mut [f64]| {
        for i in 0..p {
            x[i] = x[i].clamp(lo[i], hi[i]);
        }
    };

    let mut x = to_internal(&problem.theta0, tf);
    clamp(&mut x);
    let mut n_evals = 0usize;

    let eval_at = |x: &[f64], n_evals: &mut usize| -> Evaluation {
        *n_evals += 1;
        residuals.eval(&to_physical(x, tf))
    };

    let base = eval_at(&x, &mut n_evals);
    let mut r = match base {
        Evaluation::Residuals(r) => r,
        Evaluation::Penalty(pv) => {
            return Err(Error::Pipeline {
                stage: "optimize".into(),
                reason: format!("objective not evaluable at the start point (penalty {pv})"),
            })
        }
    };
    let mut f = r.iter().map(|v| v * v).sum::<f64>();
    let mut history = vec![f];
    let mut lambda = 1e-3;
    let mut iterations = 0usize;
    let mut status = FitStatus::MaxIterations;

    'outer: while iterations < problem.settings.max_iters {
        // Forward-difference Jacobian; columns evaluated in parallel and
        // reduced in index order for determinism.
        let m = r.len();
        let h = problem.settings.fd_step;
        let cols: Vec<Vec<f64>> = (0..p)
            .into_par_iter()
            .map(|j| {
                let mut xj = x.clone();
                let dx = match tf[j] {
                    // In log space an absolute step is a relative step on theta.
                    ParamTransform::Log => h,
                    ParamTransform::Linear => h * xj[j].abs().max(1.0),
                };
                xj[j] = (xj[j] + dx).min(hi[j]);
                let used = xj[j] - x[j];
                if used == 0.0 {
                    // Pinned at the upper bound: step downward instead.
                    xj[j] = (x[j] - dx).max(lo[j]);
                }
                let used = xj[j] - x[j];
                match residuals.eval(&to_physical(&xj, tf)) {
                    Evaluation::Residuals(rj) if used != 0.0 => {
                        rj.iter().zip(&r).map(|(a, b)| (a - b) / used).collect()
                    }
                    // No usable information in this direction.
                    _ => vec![0.0; m],
                }
            })
            .collect();
        n_evals += p;

        let mut jtj = DMatrix::<f64>::zeros(p, p);
        let mut g = DVector::<f64>::zeros(p);
        for a in 0..p {
            for b in a..p {
                let dot: f64 = cols[a].iter().zip(&cols[b]).map(|(x, y)| x * y).sum();
                jtj[(a, b)] = dot;
                jtj[(b, a)] = dot;
            }
            g[a] = cols[a].iter().zip(&r).map(|(x, y)| x * y).sum();
        }
        if g.amax() <= problem.settings.gtol {
            status = FitStatus::GradientTol;
            break;
        }

        // Damped trials until one improves the objective.
        let mut improved = false;
        for _ in 0..24 {
            let mut a = jtj.clone();
            for i in 0..p {
                a[(i, i)] += lambda * jtj[(i, i)].max(1e-30);
            }
            let Some(delta) = a.lu().solve(&(-&g)) else {
                lambda *= 4.0;
                continue;
            };
            let mut x_trial: Vec<f64> = x.iter().zip(delta.iter()).map(|(a, d)| a + d).collect();
            clamp(&mut x_trial);
            let step_inf = x_trial.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            if step_inf <= problem.settings.xtol {
                status = FitStatus::StepTol;
                break 'outer;
            }
            let trial = eval_at(&x_trial, &mut n_evals);
            let f_trial = objective_of(&trial);
            if f_trial.is_finite() && f_trial < f {
                if let Evaluation::Residuals(rt) = trial {
                    let df = f - f_trial;
                    x = x_trial;
                    r = rt;
                    f = f_trial;
                    history.push(f);
                    iterations += 1;
                    lambda = (lambda / 3.0).max(1e-12);
                    improved = true;
                    if df <= problem.settings.ftol * f.max(1e-300) {
                        status = FitStatus::ObjectiveTol;
                        break 'outer;
                    }
                    break;
                }
            }
            lambda *= 4.0;
            if lambda > 1e14 {
                status = FitStatus::StepTol;
                break 'outer;
            }
        }
        if !improved {
            status = FitStatus::StepTol;
            break;
        }
    }

    let theta = to_physical(&x, tf);
    let m = r.len().max(1);
    Ok(FitResult {
        names: problem.names.clone(),
        theta,
        objective: f,
        rmse_mv: (f / m as f64).sqrt() * 1000.0,
        iterations,
        n_evals,
        wall_time_s: start_time.elapsed().as_secs_f64(),
        status,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn settings() -> OptimizerSettings {
        OptimizerSettings { max_iters: 200, fd_step: 1e-7, ftol: 1e-14, xtol: 1e-12, gtol: 1e-12 }
    }

    #[test]
    fn quadratic_minimum_inside_bounds() {
        let problem = FitProblem {
            names: vec!["theta".into()],
            theta0: vec![0.0],
            lower: vec![0.0],
            upper: vec![10.0],
            transform: vec![ParamTransform::Linear],
            settings: settings(),
        };
        let f = |theta: &[f64]| Evaluation::Residuals(vec![theta[0] - 2.0]);
        let result = optimize(&problem, &f).unwrap();
        assert_relative_eq!(result.theta[0], 2.0, epsilon = 1e-6);
        assert!(result.objective < 1e-12);
    }

    #[test]
    fn minimum_outside_bounds_lands_on_bound() {
        let problem = FitProblem {
            names: vec!["theta".into()],
            theta0: vec![5.0],
            lower: vec![3.0],
            upper: vec![10.0],
            transform: vec![ParamTransform::Linear],
            settings: settings(),
        };
        let f = |theta: &[f64]| Evaluation::Residuals(vec![theta[0] - 2.0]);
        let result = optimize(&problem, &f).unwrap();
        assert_relative_eq!(result.theta[0], 3.0, epsilon = 1e-9);
    }

    #[test]
    fn log_space_recovers_scales_across_decades() {
        let truth = [3.0e4, 2.0e-3];
        let problem = FitProblem::positive_scales(
            vec!["a".into(), "b".into()],
            vec![1.2e4, 5.0e-3],
            100.0,
            settings(),
        )
        .unwrap();
        let f = move |theta: &[f64]| {
            Evaluation::Residuals(vec![(theta[0] / truth[0]).ln(), (theta[1] / truth[1]).ln()])
        };
        let result = optimize(&problem, &f).unwrap();
        assert_relative_eq!(result.theta[0], truth[0], max_relative = 1e-6);
        assert_relative_eq!(result.theta[1], truth[1], max_relative = 1e-6);
    }

    #[test]
    fn accepted_history_is_monotone() {
        let problem = FitProblem::positive_scales(
            vec!["a".into(), "b".into()],
            vec![1.0, 1.0],
            1000.0,
            settings(),
        )
        .unwrap();
        // Rosenbrock in log space.
        let f = |theta: &[f64]| {
            let (x, y) = (theta[0].ln(), theta[1].ln());
            Evaluation::Residuals(vec![10.0 * (y - x * x), 1.0 - x])
        };
        let result = optimize(&problem, &f).unwrap();
        for pair in result.history.windows(2) {
            assert!(pair[1] <= pair[0], "history not monotone: {:?}", result.history);
        }
        assert!(result.objective < 1e-10);
    }

    #[test]
    fn deterministic_across_runs() {
        let problem = FitProblem::positive_scales(
            vec!["a".into(), "b".into(), "c".into()],
            vec![2.0, 3.0, 4.0],
            100.0,
            settings(),
        )
        .unwrap();
        let f = |theta: &[f64]| {
            Evaluation::Residuals(vec![
                (theta[0] / 1.3).ln() * 2.0,
                (theta[1] / 7.1).ln(),
                (theta[2] / 0.9).ln() * 0.5,
                0.1 * ((theta[0] * theta[1]) / (1.3 * 7.1)).ln(),
            ])
        };
        let a = optimize(&problem, &f).unwrap();
        let b = optimize(&problem, &f).unwrap();
        assert_eq!(a.theta, b.theta);
        assert_eq!(a.iterations, b.iterations);
    }

    #[test]
    fn penalty_at_start_is_an_error() {
        let problem = FitProblem::positive_scales(vec!["a".into()], vec![1.0], 10.0, settings()).unwrap();
        let f = |_: &[f64]| Evaluation::Penalty(1e6);
        assert!(optimize(&problem, &f).is_err());
    }

    #[test]
    fn budget_exhaustion_reports_max_iterations() {
        let mut s = settings();
        s.max_iters = 2;
        let problem = FitProblem {
            names: vec!["a".into()],
            theta0: vec![8.0],
            lower: vec![0.0],
            upper: vec![10.0],
            transform: vec![ParamTransform::Linear],
            settings: s,
        };
        let f = |theta: &[f64]| Evaluation::Residuals(vec![(theta[0] - 2.0) * 1e3]);
        let result = optimize(&problem, &f).unwrap();
        assert_eq!(result.status, FitStatus::MaxIterations);
        assert_eq!(result.iterations, 2);
    }
}
