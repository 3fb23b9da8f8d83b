//! K-fold cross-validation over a descending penalty grid.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::RegressionProblem;
use crate::error::{Error, Result};

use super::cd::{coordinate_descent, finish_fit, CdOptions};
use super::gram::{GramSystem, Moments};
use super::LassoFit;

/// `count` log-spaced penalties from `lambda_max` down to
/// `lambda_max * min_ratio`.
pub fn lambda_grid(lambda_max: f64, count: usize, min_ratio: f64) -> Vec<f64> {
    if count <= 1 || lambda_max <= 0.0 {
        return vec![lambda_max.max(0.0)];
    }
    let lo = min_ratio.ln();
    (0..count)
        .map(|i| {
            if i == 0 {
                lambda_max
            } else {
                lambda_max * (lo * i as f64 / (count - 1) as f64).exp()
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridOptions {
    pub count: usize,
    pub min_ratio: f64,
}

impl Default for GridOptions {
    fn default() -> Self {
        Self {
            count: 100,
            min_ratio: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub best_lambda: f64,
    pub best_index: usize,
    pub grid: Vec<f64>,
    /// Mean squared held-out error per grid value.
    pub errors: Vec<f64>,
}

/// Contiguous row blocks; the first `rows % k` folds get one extra row.
pub fn fold_bounds(rows: usize, k: usize) -> Vec<std::ops::Range<usize>> {
    let base = rows / k;
    let extra = rows % k;
    let mut start = 0;
    (0..k)
        .map(|f| {
            let len = base + usize::from(f < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}

/// Held-out squared error of every grid value for one fold.
fn fold_errors(
    problem: &RegressionProblem,
    total: &Moments,
    fold: std::ops::Range<usize>,
    grid: &[f64],
    opts: &CdOptions,
) -> Vec<f64> {
    let held = Moments::from_rows(problem, fold.clone());
    let sys = GramSystem::from_moments(&total.minus(&held), problem.has_intercept);
    let first = problem.first_feature();
    let mut warm: Option<Vec<f64>> = None;
    grid.iter()
        .map(|&lambda| {
            let state = coordinate_descent(&sys, lambda, warm.as_deref(), opts, |_| {});
            let intercept = sys.intercept_for(&state.beta);
            let mut sse = 0.0;
            for r in fold.clone() {
                let mut pred = intercept;
                for (k, b) in state.beta.iter().enumerate() {
                    if *b != 0.0 {
                        pred += b * problem.design[(r, first + k)];
                    }
                }
                let e = problem.response[r] - pred;
                sse += e * e;
            }
            warm = Some(state.beta);
            sse
        })
        .collect()
}

/// Picks the penalty with the smallest mean held-out squared error. Folds
/// run in parallel; their errors are summed in fold order so the result does
/// not depend on scheduling. Ties go to the larger penalty.
pub fn cross_validate_lambda(
    problem: &RegressionProblem,
    k: usize,
    grid: &[f64],
    opts: &CdOptions,
) -> Result<CvResult> {
    let rows = problem.rows();
    if k < 2 || rows < 2 * k {
        return Err(Error::TooFewRows { rows, folds: k });
    }
    if grid.is_empty() {
        return Err(Error::InvalidConfig("empty lambda grid".into()));
    }
    if grid.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::InvalidConfig("lambda grid must be descending".into()));
    }
    let total = Moments::from_rows(problem, 0..rows);
    let per_fold: Vec<Vec<f64>> = fold_bounds(rows, k)
        .into_par_iter()
        .map(|fold| fold_errors(problem, &total, fold, grid, opts))
        .collect();

    let mut errors = vec![0.0; grid.len()];
    for fold in &per_fold {
        for (acc, e) in errors.iter_mut().zip(fold) {
            *acc += e;
        }
    }
    for e in &mut errors {
        *e /= rows as f64;
    }
    let mut best_index = 0;
    for (i, &e) in errors.iter().enumerate() {
        if e < errors[best_index] {
            best_index = i;
        }
    }
    Ok(CvResult {
        best_lambda: grid[best_index],
        best_index,
        grid: grid.to_vec(),
        errors,
    })
}

/// Cross-validated LASSO on a standardized problem: builds the default
/// grid, selects the penalty, then refits on all rows by walking the grid
/// down to the chosen value with warm starts.
pub fn fit_lasso_cv(
    problem: &RegressionProblem,
    k: usize,
    grid_opts: &GridOptions,
    opts: &CdOptions,
) -> Result<(LassoFit, CvResult)> {
    let sys = GramSystem::from_problem(problem);
    let grid = lambda_grid(sys.lambda_max(), grid_opts.count, grid_opts.min_ratio);
    let cv = cross_validate_lambda(problem, k, &grid, opts)?;
    let mut warm: Option<Vec<f64>> = None;
    let mut last = None;
    for &lambda in &grid[..=cv.best_index] {
        let state = coordinate_descent(&sys, lambda, warm.as_deref(), opts, |_| {});
        warm = Some(state.beta.clone());
        last = Some(state);
    }
    let fit = finish_fit(problem, &sys, cv.best_lambda, last.expect("grid is non-empty"));
    Ok((fit, cv))
}
