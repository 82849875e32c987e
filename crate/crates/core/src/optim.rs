//! Group-lasso regularized KLIEP fitting.
//!
//! Minimizes `ℓ(θ) + λ Σ_t ‖θ_t‖₂` with a monotone accelerated proximal
//! gradient method (FISTA) using backtracking on the smooth part and
//! function-value restarts. Zero blocks in the solution are exact zeros
//! produced by the group soft-threshold.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kliep::KliepProblem;
use crate::model::{PairIndex, ParameterVector};

/// Step growth applied after each iteration before backtracking.
const STEP_GROWTH: f64 = 1.25;
const MIN_STEP: f64 = 1e-20;
/// Minimum spacing, in iterations, between KKT checks triggered by a small
/// objective change.
const KKT_CHECK_SPACING: usize = 5;

/// Group soft-threshold: `max(0, 1 − tλ/‖v‖) v`.
pub fn prox_group(v: &[f64], t: f64, lambda: f64) -> Vec<f64> {
    let mut out = v.to_vec();
    prox_group_in_place(&mut out, t * lambda);
    out
}

#[inline]
fn prox_group_in_place(v: &mut [f64], threshold: f64) {
    if threshold <= 0.0 {
        return;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm <= threshold {
        v.iter_mut().for_each(|x| *x = 0.0);
    } else {
        let scale = 1.0 - threshold / norm;
        v.iter_mut().for_each(|x| *x *= scale);
    }
}

fn prox_all(v: &mut DVector<f64>, b: usize, threshold: f64) {
    for block in v.as_mut_slice().chunks_mut(b) {
        prox_group_in_place(block, threshold);
    }
}

fn penalty(v: &DVector<f64>, b: usize) -> f64 {
    v.as_slice()
        .chunks(b)
        .map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt())
        .sum()
}

/// `λ_{n_p} = C √(log m / n_p)`.
pub fn lambda_scaling(n_p: usize, m: f64, c: f64) -> f64 {
    c * (m.ln() / n_p as f64).sqrt()
}

/// Smallest λ for which `θ = 0` is optimal: the largest block norm of the
/// gradient at the origin.
pub fn lambda_max(problem: &KliepProblem) -> f64 {
    let g = problem
        .gradient(&problem.zero_parameter())
        .expect("zero parameter matches the problem");
    g.group_norms().into_iter().fold(0.0, f64::max)
}

/// KKT tolerance used to certify a solution at regularization `λ`.
pub fn kkt_tolerance(lambda: f64) -> f64 {
    1e-4 * lambda.max(1.0)
}

/// Largest violation of the group-lasso first-order conditions, measured
/// as excess over zero (non-zero blocks) or over λ (zero blocks).
pub fn kkt_violation(grad: &DVector<f64>, theta: &DVector<f64>, b: usize, lambda: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for (g, t) in grad.as_slice().chunks(b).zip(theta.as_slice().chunks(b)) {
        let tnorm = t.iter().map(|x| x * x).sum::<f64>().sqrt();
        let v = if tnorm > 0.0 {
            g.iter()
                .zip(t)
                .map(|(gi, ti)| {
                    let r = gi + lambda * ti / tnorm;
                    r * r
                })
                .sum::<f64>()
                .sqrt()
        } else {
            let gnorm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
            (gnorm - lambda).max(0.0)
        };
        worst = worst.max(v);
    }
    worst
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub lambda: f64,
    pub max_iters: usize,
    /// Relative objective change below which the KKT conditions are checked.
    pub tol: f64,
    pub backtracking: f64,
    pub initial_step: f64,
    pub restart: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            max_iters: 2000,
            tol: 1e-8,
            backtracking: 0.5,
            initial_step: 1.0,
            restart: true,
        }
    }
}

impl SolverConfig {
    pub fn with_lambda(lambda: f64) -> Self {
        Self {
            lambda,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be non-negative, got {}", self.lambda)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config("tol must be positive".into()));
        }
        if !(self.backtracking > 0.0 && self.backtracking < 1.0) {
            return Err(Error::Config("backtracking factor must lie in (0, 1)".into()));
        }
        if !(self.initial_step > 0.0 && self.initial_step.is_finite()) {
            return Err(Error::Config("initial step must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SolverReport {
    pub lambda: f64,
    pub theta_hat: ParameterVector,
    pub support: Vec<PairIndex>,
    /// Penalized objective after each iteration, starting with the initial point.
    pub objective_trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// KKT violation at the returned point.
    pub kkt_violation: f64,
}

impl SolverReport {
    pub fn objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace holds the initial objective")
    }
}

/// Solves the group-lasso KLIEP problem starting from `init`.
pub fn solve(
    problem: &KliepProblem,
    config: &SolverConfig,
    init: &ParameterVector,
) -> Result<SolverReport> {
    config.validate()?;
    init.check_compatible(problem.m(), problem.b())?;
    let b = problem.b();
    let lambda = config.lambda;
    let tol_kkt = kkt_tolerance(lambda);
    let objective = |f: f64, v: &DVector<f64>| f + lambda * penalty(v, b);

    let mut x = init.as_vector().clone();
    let mut x_obj = objective(problem.loss_flat(&x), &x);
    let mut y = x.clone();
    let mut momentum = 1.0_f64;
    let mut step = config.initial_step;
    let mut trace = vec![x_obj];
    let mut converged = false;
    let mut last_violation = f64::INFINITY;
    let mut last_check = 0usize;
    let mut iterations = 0;

    let kkt_at = |x: &DVector<f64>| {
        let (_, g) = problem.loss_and_gradient_flat(x);
        kkt_violation(&g, x, b, lambda)
    };

    // the initial point may already be optimal, e.g. zero for λ ≥ λ_max
    last_violation = last_violation.min(kkt_at(&x));
    if last_violation <= tol_kkt {
        converged = true;
    }

    while !converged && iterations < config.max_iters {
        iterations += 1;
        let (fy, gy) = problem.loss_and_gradient_flat(&y);

        // backtracking on the smooth part
        let (z, fz) = loop {
            let mut z = &y - &gy * step;
            prox_all(&mut z, b, step * lambda);
            let fz = problem.loss_flat(&z);
            let d = &z - &y;
            let bound = fy + gy.dot(&d) + d.norm_squared() / (2.0 * step);
            if fz <= bound + 1e-12 * fy.abs().max(1e-300) || step < MIN_STEP {
                break (z, fz);
            }
            step *= config.backtracking;
        };
        let z_obj = objective(fz, &z);

        let prev_obj = x_obj;
        let accepted = z_obj <= x_obj;
        if accepted {
            let next = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
            let beta = (momentum - 1.0) / next;
            y = &z + (&z - &x) * beta;
            x = z;
            x_obj = z_obj;
            momentum = next;
        } else if config.restart {
            momentum = 1.0;
            y = x.clone();
        } else {
            // monotone FISTA: keep x, carry the momentum through z
            let next = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
            y = &x + (&z - &x) * (momentum / next);
            momentum = next;
        }
        trace.push(x_obj);

        let change = (prev_obj - x_obj).abs() / x_obj.abs().max(1.0);
        // a rejected step leaves x in place, which says nothing about convergence
        if accepted && change <= config.tol && iterations - last_check >= KKT_CHECK_SPACING {
            last_check = iterations;
            last_violation = kkt_at(&x);
            if last_violation <= tol_kkt {
                converged = true;
            }
        }
        step = (step * STEP_GROWTH).min(1e12);
        if !x_obj.is_finite() {
            break;
        }
    }

    if !converged {
        last_violation = kkt_at(&x);
        converged = last_violation <= tol_kkt;
    }
    let theta_hat = ParameterVector::from_flat(problem.m(), b, x)?;
    let support = theta_hat.support();
    Ok(SolverReport {
        lambda,
        theta_hat,
        support,
        objective_trace: trace,
        converged,
        iterations,
        kkt_violation: last_violation,
    })
}

/// λ grid for a regularization path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaGrid {
    /// `points` log-spaced values from λ_max down to `min_ratio · λ_max`.
    Auto { points: usize, min_ratio: f64 },
    Explicit(Vec<f64>),
}

impl Default for LambdaGrid {
    fn default() -> Self {
        LambdaGrid::Auto {
            points: 40,
            min_ratio: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathConfig {
    pub grid: LambdaGrid,
    pub warm_start: bool,
    /// Stop at the first λ whose support size exceeds this target.
    pub stop_above: Option<usize>,
}

impl Default for PathConfig {
    fn default() -> Self {
        Self {
            grid: LambdaGrid::default(),
            warm_start: true,
            stop_above: None,
        }
    }
}

impl PathConfig {
    /// Concrete, strictly decreasing λ values for `problem`.
    pub fn lambdas(&self, problem: &KliepProblem) -> Result<Vec<f64>> {
        let grid = match &self.grid {
            LambdaGrid::Auto { points, min_ratio } => {
                if *points == 0 || !(*min_ratio > 0.0 && *min_ratio < 1.0) {
                    return Err(Error::Config(
                        "auto grid needs points ≥ 1 and 0 < min_ratio < 1".into(),
                    ));
                }
                let top = lambda_max(problem);
                if top <= 0.0 {
                    // identical feature means: every λ > 0 gives θ = 0
                    vec![1.0]
                } else if *points == 1 {
                    vec![top]
                } else {
                    let (hi, lo) = (top.ln(), (top * min_ratio).ln());
                    (0..*points)
                        .map(|i| (hi + (lo - hi) * i as f64 / (*points - 1) as f64).exp())
                        .collect()
                }
            }
            LambdaGrid::Explicit(v) => v.clone(),
        };
        if grid.is_empty() {
            return Err(Error::Config("λ grid is empty".into()));
        }
        if grid.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            return Err(Error::Config("λ grid values must be positive".into()));
        }
        if grid.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Config("λ grid must be strictly decreasing".into()));
        }
        Ok(grid)
    }
}

/// Solves along a decreasing λ grid, optionally warm-started and stopped
/// once the support grows past a target size.
pub fn solve_path(
    problem: &KliepProblem,
    path: &PathConfig,
    config: &SolverConfig,
) -> Result<Vec<SolverReport>> {
    let lambdas = path.lambdas(problem)?;
    let mut reports = Vec::with_capacity(lambdas.len());
    let mut init = problem.zero_parameter();
    for lambda in lambdas {
        let cfg = SolverConfig {
            lambda,
            ..config.clone()
        };
        let report = solve(problem, &cfg, &init)?;
        if !report.converged {
            log::debug!("path: λ = {lambda:.4e} did not converge in {} iterations", report.iterations);
        }
        if path.warm_start {
            init = report.theta_hat.clone();
        }
        let stop = path
            .stop_above
            .is_some_and(|target| report.support.len() > target);
        reports.push(report);
        if stop {
            break;
        }
    }
    Ok(reports)
}
