//! Covariance test for pairing a meter with the one other meter whose
//! previous-hour consumption best explains its LASSO residual.
//!
//! The residual `e` of the target's own-lag LASSO fit is regressed on the
//! lag-1 values of every other meter (columns centered, unit norm). The
//! first two knots of that LASSO path give
//! `T1 = lambda1 * (lambda1 - lambda2) / sigma^2`, which is asymptotically
//! Exp(1) under the global null when `sigma^2` is known. With `sigma^2`
//! estimated from the full least-squares fit on `N - P` degrees of freedom
//! the same ratio is referred to F(2, N - P).

use std::ops::Range;

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::design::{build_from_labels, center_and_normalize, ColumnLabel, Panel, RegressionProblem};
use crate::error::{Error, Result};
use crate::solver::{fit_ols, lasso_path_prefix, LassoFit, LinearModel, OlsFit};

/// Survival function of the F(2, m) distribution, `(1 + 2x/m)^(-m/2)`.
pub fn f2_survival(x: f64, m: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    (-(m / 2.0) * (2.0 * x / m).ln_1p()).exp()
}

/// Survival function of Exp(1).
pub fn exp1_survival(t: f64) -> f64 {
    if t <= 0.0 {
        1.0
    } else {
        (-t).exp()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualProblem {
    pub target_id: String,
    /// Residuals of the target's fit over `rows`.
    pub residuals: DVector<f64>,
    /// Lag-1 values of each candidate over `rows`, centered and unit norm.
    pub design: DMatrix<f64>,
    pub candidate_ids: Vec<String>,
    /// Series positions the rows correspond to.
    pub rows: Range<usize>,
}

impl ResidualProblem {
    pub fn n(&self) -> usize {
        self.residuals.len()
    }

    pub fn p(&self) -> usize {
        self.design.ncols()
    }

    pub fn as_regression(&self) -> Result<RegressionProblem> {
        let labels = self
            .candidate_ids
            .iter()
            .map(|id| ColumnLabel::cross_lag(id.clone(), 1))
            .collect();
        RegressionProblem::new(self.residuals.clone(), self.design.clone(), labels, false)
    }

    /// Keeps the listed candidate columns, in the given order.
    pub fn restrict(&self, keep: &[usize]) -> ResidualProblem {
        ResidualProblem {
            target_id: self.target_id.clone(),
            residuals: self.residuals.clone(),
            design: self.design.select_columns(keep.iter()),
            candidate_ids: keep.iter().map(|&j| self.candidate_ids[j].clone()).collect(),
            rows: self.rows.clone(),
        }
    }
}

fn residual_problem_unchecked(
    target_id: &str,
    target: &[f64],
    fit: &LinearModel,
    others: &[(&str, &[f64])],
    rows: Range<usize>,
) -> Result<ResidualProblem> {
    if rows.start == 0 || rows.end > target.len() {
        return Err(Error::MisalignedSeries(format!(
            "rows {rows:?} do not fit a series of length {}",
            target.len()
        )));
    }
    if others.iter().any(|(id, _)| *id == target_id) {
        return Err(Error::MisalignedSeries(format!(
            "target {target_id} listed among its own candidates"
        )));
    }
    if let Some((id, v)) = others.iter().find(|(_, v)| v.len() != target.len()) {
        return Err(Error::MisalignedSeries(format!(
            "meter {id} has {} values, target {target_id} has {}",
            v.len(),
            target.len()
        )));
    }
    let n = rows.len();
    let mut residuals = DVector::zeros(n);
    for (r, t) in rows.clone().enumerate() {
        residuals[r] = target[t] - fit.predict_at(target, t)?;
    }
    let mut design = DMatrix::from_fn(n, others.len(), |r, j| others[j].1[rows.start + r - 1]);
    center_and_normalize(&mut design)?;
    Ok(ResidualProblem {
        target_id: target_id.to_string(),
        residuals,
        design,
        candidate_ids: others.iter().map(|(id, _)| id.to_string()).collect(),
        rows,
    })
}

/// Residual regression of the target on every other meter's lag-1 values
/// over the fit's training rows.
pub fn build_residual_problem(
    target_id: &str,
    target: &[f64],
    fit: &LinearModel,
    others: &[(&str, &[f64])],
    rows: Range<usize>,
) -> Result<ResidualProblem> {
    let problem = residual_problem_unchecked(target_id, target, fit, others, rows)?;
    if problem.n() <= problem.p() {
        return Err(Error::TooManyCandidates {
            rows: problem.n(),
            candidates: problem.p(),
        });
    }
    Ok(problem)
}

/// `||e - xi alpha_ols||^2 / (N - P)`.
pub fn estimate_sigma2(problem: &ResidualProblem) -> Result<f64> {
    let (n, p) = (problem.n(), problem.p());
    if n <= p {
        return Err(Error::Underdetermined { rows: n, cols: p });
    }
    let fit: OlsFit = fit_ols(&problem.as_regression()?)?;
    Ok(fit.residual_sum_squares / (n - p) as f64)
}

pub fn covariance_statistic(lambda1: f64, lambda2: f64, sigma2: f64) -> Result<f64> {
    if !(sigma2 > 0.0) {
        return Err(Error::NonPositiveSigma(sigma2));
    }
    if !(lambda2 >= 0.0 && lambda1 >= lambda2) {
        return Err(Error::InvalidConfig(format!(
            "knots must satisfy lambda1 >= lambda2 >= 0, got {lambda1}, {lambda2}"
        )));
    }
    Ok(lambda1 * (lambda1 - lambda2) / sigma2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FTest {
    pub f1: f64,
    /// Survival of F(2, N - P) at `f1`.
    pub p_f: f64,
    /// Survival of Exp(1) at `f1`, treating the estimate as the true variance.
    pub p_exp: f64,
}

pub fn f_statistic_pvalues(
    lambda1: f64,
    lambda2: f64,
    sigma2_hat: f64,
    n: usize,
    p: usize,
) -> Result<FTest> {
    if n <= p {
        return Err(Error::BadDof { n, p });
    }
    let f1 = covariance_statistic(lambda1, lambda2, sigma2_hat)?;
    Ok(FTest {
        f1,
        p_f: f2_survival(f1, (n - p) as f64),
        p_exp: exp1_survival(f1),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairTestOptions {
    pub alpha: f64,
    /// Known noise variance; switches the reference to Exp(1).
    pub sigma2_known: Option<f64>,
    /// Center the residual before testing (one degree of freedom is spent).
    pub intercept: bool,
}

impl Default for PairTestOptions {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            sigma2_known: None,
            intercept: false,
        }
    }
}

/// Residuals explained below this variance count as a perfect fit.
pub const DEGENERATE_SIGMA2: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovTestResult {
    pub target_id: String,
    pub lambda1: f64,
    pub lambda2: f64,
    pub sigma2_hat: Option<f64>,
    pub t1: f64,
    pub f1: f64,
    pub p_exp: f64,
    pub p_f: f64,
    /// The p-value the decision used: `p_exp` with a known variance,
    /// `p_f` otherwise.
    pub p_value: f64,
    pub selected_candidate: Option<String>,
    pub accepted: bool,
    pub n: usize,
    pub p: usize,
    pub degenerate_sigma: bool,
    pub path_degenerate: bool,
    /// Candidate count before the pool was cut to `N / 2`, when it was.
    pub pool_truncated_from: Option<usize>,
}

/// Runs the covariance test on a prepared residual problem.
pub fn covariance_test(problem: &ResidualProblem, opts: &PairTestOptions) -> Result<CovTestResult> {
    if !(opts.alpha > 0.0 && opts.alpha < 1.0) {
        return Err(Error::InvalidConfig(format!("alpha must lie in (0, 1), got {}", opts.alpha)));
    }
    let mut work = problem.clone();
    let mut truncated = None;
    let spent = usize::from(opts.intercept);
    if opts.intercept {
        let mean = work.residuals.mean();
        work.residuals.add_scalar_mut(-mean);
    }
    if work.n() <= work.p() + spent {
        let keep_count = (work.n() / 2).max(1);
        let scores = work.design.tr_mul(&work.residuals);
        let mut order: Vec<usize> = (0..work.p()).collect();
        order.sort_by(|&a, &b| scores[b].abs().total_cmp(&scores[a].abs()).then(a.cmp(&b)));
        let mut keep: Vec<usize> = order.into_iter().take(keep_count).collect();
        keep.sort_unstable();
        truncated = Some(work.p());
        work = work.restrict(&keep);
    }
    let (n, p) = (work.n(), work.p());

    let path = lasso_path_prefix(&work.as_regression()?, 2)?;
    let lambda1 = path.knot(1);
    let lambda2 = path.knot(2);
    let selected_candidate = path.entering.first().map(|&j| work.candidate_ids[j].clone());

    let sigma2_hat = {
        let fit = fit_ols(&work.as_regression()?);
        match fit {
            Ok(f) => Some(f.residual_sum_squares / (n - p - spent) as f64),
            Err(Error::RankDeficient) if opts.sigma2_known.is_some() => None,
            Err(e) => return Err(e),
        }
    };

    let mut result = CovTestResult {
        target_id: work.target_id.clone(),
        lambda1,
        lambda2,
        sigma2_hat,
        t1: 0.0,
        f1: 0.0,
        p_exp: 1.0,
        p_f: 1.0,
        p_value: 1.0,
        selected_candidate,
        accepted: false,
        n,
        p,
        degenerate_sigma: false,
        path_degenerate: path.degenerate,
        pool_truncated_from: truncated,
    };
    if lambda1 <= 0.0 {
        return Ok(result);
    }

    match opts.sigma2_known {
        Some(sigma2) => {
            result.t1 = covariance_statistic(lambda1, lambda2, sigma2)?;
            result.p_exp = exp1_survival(result.t1);
            result.p_value = result.p_exp;
            if let Some(s2) = sigma2_hat.filter(|s| *s >= DEGENERATE_SIGMA2) {
                let f = f_statistic_pvalues(lambda1, lambda2, s2, n - spent, p)?;
                result.f1 = f.f1;
                result.p_f = f.p_f;
            }
        }
        None => {
            let s2 = sigma2_hat.expect("estimated above");
            if s2 < DEGENERATE_SIGMA2 {
                result.degenerate_sigma = true;
                result.t1 = f64::INFINITY;
                result.f1 = f64::INFINITY;
                result.p_exp = 0.0;
                result.p_f = 0.0;
                result.p_value = 0.0;
            } else {
                let f = f_statistic_pvalues(lambda1, lambda2, s2, n - spent, p)?;
                result.t1 = f.f1;
                result.f1 = f.f1;
                result.p_exp = f.p_exp;
                result.p_f = f.p_f;
                result.p_value = f.p_f;
            }
        }
    }
    result.accepted = result.p_value < opts.alpha;
    Ok(result)
}

/// Builds the residual problem for `target` and tests whether one of
/// `others` should be paired with it.
pub fn run_pair_test(
    target_id: &str,
    target: &[f64],
    fit: &LinearModel,
    others: &[(&str, &[f64])],
    rows: Range<usize>,
    opts: &PairTestOptions,
) -> Result<CovTestResult> {
    let problem = residual_problem_unchecked(target_id, target, fit, others, rows)?;
    covariance_test(&problem, opts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedModel {
    pub model: LinearModel,
    pub paired_id: Option<String>,
    /// Set when the paired column was unusable and the original fit was kept.
    pub fallback: bool,
}

/// Least-squares refit on the target's selected own lags plus the paired
/// meter's lag-1 value. Rows are the same as the LASSO fit's.
pub fn paired_forecast_model(
    target_fit: &LassoFit,
    paired_id: &str,
    target: &[f64],
    paired: &[f64],
    rows: Range<usize>,
) -> Result<PairedModel> {
    let fallback = || PairedModel {
        model: LinearModel::from_lasso(target_fit),
        paired_id: None,
        fallback: true,
    };
    if paired.len() != target.len() {
        return Err(Error::MisalignedSeries(format!(
            "paired meter {paired_id} has {} values, target has {}",
            paired.len(),
            target.len()
        )));
    }
    if rows.start == 0 {
        return Err(Error::MisalignedSeries("rows must start after position 0".into()));
    }
    let lagged = &paired[rows.start - 1..rows.end - 1];
    let mean = lagged.iter().sum::<f64>() / lagged.len() as f64;
    let spread = lagged.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max);
    if spread <= 1e-12 * mean.abs().max(1.0) {
        warn!("paired meter {paired_id} is flat over the window; keeping the unpaired fit");
        return Ok(fallback());
    }

    let mut labels = target_fit.active_labels();
    labels.push(ColumnLabel::cross_lag(paired_id, 1));
    let panel = Panel {
        target,
        others: vec![(paired_id, paired)],
    };
    let problem = build_from_labels(&panel, rows, &labels, true)?;
    let ols = fit_ols(&problem)?;
    Ok(PairedModel {
        model: LinearModel::from_ols(&ols),
        paired_id: Some(paired_id.to_string()),
        fallback: false,
    })
}
