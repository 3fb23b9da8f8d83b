//! Coordinate descent for the LASSO with an unpenalized intercept.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::design::RegressionProblem;
use crate::error::{Error, Result};

use super::gram::GramSystem;
use super::{soft_threshold, LassoFit};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdOptions {
    /// Stop once no coefficient moves by more than this in a full sweep.
    pub tol: f64,
    pub max_iter: usize,
    /// Slack allowed in the optimality conditions before a converged
    /// iterate is accepted.
    pub kkt_tol: f64,
}

impl Default for CdOptions {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            max_iter: 10_000,
            kkt_tol: 1e-6,
        }
    }
}

/// Outcome of running the coordinate descent kernel on a Gram system.
#[derive(Debug, Clone)]
pub struct CdState {
    pub beta: Vec<f64>,
    /// `X_c' (y_c - X_c beta)`.
    pub correlation: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
}

fn fresh_correlation(sys: &GramSystem, beta: &[f64]) -> Vec<f64> {
    let b = DVector::from_column_slice(beta);
    (&sys.xty - &sys.gram * b).iter().copied().collect()
}

/// Largest violation of the optimality conditions given current correlations.
pub fn kkt_gap(correlation: &[f64], beta: &[f64], lambda: f64) -> f64 {
    correlation
        .iter()
        .zip(beta)
        .map(|(&c, &b)| {
            if b != 0.0 {
                (c - lambda * b.signum()).abs()
            } else {
                (c.abs() - lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// One pass of coordinate updates over `coords`; returns the largest
/// coefficient change.
fn sweep(
    sys: &GramSystem,
    lambda: f64,
    beta: &mut [f64],
    corr: &mut [f64],
    coords: impl Iterator<Item = usize>,
) -> f64 {
    let p = beta.len();
    let gram = sys.gram.as_slice();
    let mut max_change = 0.0f64;
    for j in coords {
        let gjj = gram[j * p + j];
        if gjj <= 0.0 {
            continue;
        }
        let old = beta[j];
        let new = soft_threshold(corr[j] + gjj * old, lambda) / gjj;
        if new != old {
            let delta = new - old;
            for (c, g) in corr.iter_mut().zip(&gram[j * p..(j + 1) * p]) {
                *c -= g * delta;
            }
            beta[j] = new;
            max_change = max_change.max(delta.abs());
        }
    }
    max_change
}

/// Active-set step: with the support and signs of `beta` held fixed the
/// objective is a quadratic whose minimizer solves
/// `G_AA b = xty_A - lambda * s_A`. Moves `beta` towards that minimizer,
/// stopping where the first coefficient reaches zero if the signs would
/// otherwise flip. Inside one sign orthant the objective is that convex
/// quadratic, so the move never increases it. Returns `false` when the
/// restricted Gram matrix is singular.
fn refine_active(sys: &GramSystem, lambda: f64, beta: &mut [f64], corr: &mut Vec<f64>) -> bool {
    let active: Vec<usize> = (0..beta.len()).filter(|&j| beta[j] != 0.0).collect();
    if active.is_empty() {
        return true;
    }
    let k = active.len();
    let g = DMatrix::from_fn(k, k, |a, b| sys.gram[(active[a], active[b])]);
    let Some(chol) = g.cholesky() else {
        return false;
    };
    let rhs = DVector::from_iterator(k, active.iter().map(|&j| sys.xty[j] - lambda * beta[j].signum()));
    let target = chol.solve(&rhs);
    let mut step = 1.0f64;
    let mut blocking = None;
    for (a, &j) in active.iter().enumerate() {
        if target[a].signum() != beta[j].signum() || target[a] == 0.0 {
            let t = beta[j] / (beta[j] - target[a]);
            if t < step {
                step = t;
                blocking = Some(j);
            }
        }
    }
    for (a, &j) in active.iter().enumerate() {
        beta[j] += step * (target[a] - beta[j]);
    }
    if let Some(j) = blocking {
        beta[j] = 0.0;
    }
    *corr = fresh_correlation(sys, beta);
    true
}

/// Active-set sweeps between refinement attempts.
const REFINE_EVERY: usize = 10;

/// Runs coordinate descent from `warm` (or zero). `on_sweep` sees the
/// coefficients after every sweep.
pub fn coordinate_descent(
    sys: &GramSystem,
    lambda: f64,
    warm: Option<&[f64]>,
    opts: &CdOptions,
    mut on_sweep: impl FnMut(&[f64]),
) -> CdState {
    let p = sys.dim();
    let mut beta = match warm {
        Some(w) if w.len() == p => w.to_vec(),
        _ => vec![0.0; p],
    };
    let mut corr = fresh_correlation(sys, &beta);
    let mut sweeps = 0;
    let mut converged = false;

    while sweeps < opts.max_iter {
        let change = sweep(sys, lambda, &mut beta, &mut corr, 0..p);
        sweeps += 1;
        on_sweep(&beta);
        if change < opts.tol {
            corr = fresh_correlation(sys, &beta);
            if kkt_gap(&corr, &beta, lambda) <= opts.kkt_tol {
                converged = true;
                break;
            }
            continue;
        }
        // Iterate on the current support until it settles, then re-check
        // every coordinate with a full sweep.
        let mut active: Vec<usize> = (0..p).filter(|&j| beta[j] != 0.0).collect();
        let mut since_refine = 0;
        while sweeps < opts.max_iter {
            let change = sweep(sys, lambda, &mut beta, &mut corr, active.iter().copied());
            sweeps += 1;
            since_refine += 1;
            on_sweep(&beta);
            if change < opts.tol {
                break;
            }
            // Coordinate descent crawls on correlated columns; jump to the
            // exact minimizer of the current sign pattern instead.
            if since_refine == REFINE_EVERY && refine_active(sys, lambda, &mut beta, &mut corr) {
                since_refine = 0;
                on_sweep(&beta);
                active.retain(|&j| beta[j] != 0.0);
            }
        }
    }
    if !converged {
        corr = fresh_correlation(sys, &beta);
    }
    CdState {
        beta,
        correlation: corr,
        sweeps,
        converged,
    }
}

/// `0.5 * ||y - b0 - X b||^2 + lambda * ||b||_1` evaluated directly on the
/// problem's rows.
pub fn lasso_objective(problem: &RegressionProblem, intercept: f64, beta: &[f64], lambda: f64) -> f64 {
    let first = problem.first_feature();
    let mut rss = 0.0;
    for r in 0..problem.rows() {
        let mut fitted = intercept;
        for (k, b) in beta.iter().enumerate() {
            if *b != 0.0 {
                fitted += b * problem.design[(r, first + k)];
            }
        }
        let e = problem.response[r] - fitted;
        rss += e * e;
    }
    0.5 * rss + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
}

pub(crate) fn finish_fit(
    problem: &RegressionProblem,
    sys: &GramSystem,
    lambda: f64,
    state: CdState,
) -> LassoFit {
    let intercept = sys.intercept_for(&state.beta);
    let objective = lasso_objective(problem, intercept, &state.beta, lambda);
    let active_set = state
        .beta
        .iter()
        .enumerate()
        .filter(|(_, b)| **b != 0.0)
        .map(|(j, _)| j)
        .collect();
    LassoFit {
        intercept,
        coefficients: state.beta,
        lambda,
        active_set,
        objective,
        iterations: state.sweeps,
        converged: state.converged,
        column_labels: problem.feature_labels().to_vec(),
        column_scales: problem.feature_scales().to_vec(),
    }
}

/// Solves the LASSO at one penalty. A run that exhausts `max_iter` still
/// returns its last iterate with `converged == false`.
pub fn fit_lasso_cd(
    problem: &RegressionProblem,
    lambda: f64,
    opts: &CdOptions,
    warm: Option<&[f64]>,
) -> Result<LassoFit> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidConfig(format!("lambda must be >= 0, got {lambda}")));
    }
    let sys = GramSystem::from_problem(problem);
    let state = coordinate_descent(&sys, lambda, warm, opts, |_| {});
    Ok(finish_fit(problem, &sys, lambda, state))
}

/// Fits along a descending penalty sequence, warm-starting each solve.
pub fn fit_lasso_path(
    problem: &RegressionProblem,
    lambdas: &[f64],
    opts: &CdOptions,
) -> Result<Vec<LassoFit>> {
    let sys = GramSystem::from_problem(problem);
    let mut warm: Option<Vec<f64>> = None;
    let mut fits = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        if !(lambda >= 0.0) {
            return Err(Error::InvalidConfig(format!("lambda must be >= 0, got {lambda}")));
        }
        let state = coordinate_descent(&sys, lambda, warm.as_deref(), opts, |_| {});
        warm = Some(state.beta.clone());
        fits.push(finish_fit(problem, &sys, lambda, state));
    }
    Ok(fits)
}

/// Largest optimality violation of `fit`, computed from explicit residuals.
pub fn kkt_violation(problem: &RegressionProblem, fit: &LassoFit) -> f64 {
    let first = problem.first_feature();
    let mut residual = problem.response.clone();
    for r in 0..problem.rows() {
        let mut fitted = fit.intercept;
        for (k, b) in fit.coefficients.iter().enumerate() {
            fitted += b * problem.design[(r, first + k)];
        }
        residual[r] -= fitted;
    }
    let corr: Vec<f64> = (0..fit.coefficients.len())
        .map(|k| problem.design.column(first + k).dot(&residual))
        .collect();
    kkt_gap(&corr, &fit.coefficients, fit.lambda)
}
