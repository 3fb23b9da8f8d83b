//! Synthetic panels with known structure, and brute-force reference solvers
//! used to check the estimators.
//!
//! All randomness comes from `ChaCha8Rng::seed_from_u64(seed)`; meter `u` of
//! a panel draws from stream `u` of that generator. Gaussian noise uses the
//! ziggurat sampler of `rand_distr::StandardNormal`. Both algorithms are
//! portable, so a given seed yields the same bytes on every platform.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::design::RegressionProblem;
use crate::error::{Error, Result};
use crate::series::{ConsumptionSeries, HourIndex, HOURS_PER_DAY};

pub const MAX_SPEC_LAG: usize = 240;

/// Seeded generator for stream `stream` of `seed`.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseArSpec {
    pub support: Vec<usize>,
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub noise_sd: f64,
    pub length: usize,
    pub seed: u64,
    /// Added to the generated values by hour of day.
    pub daily_profile: Option<Vec<f64>>,
    /// First hour of the series; only affects hour-of-day alignment.
    pub start: HourIndex,
}

impl SparseArSpec {
    /// Lag pattern of a selected household model: strongest weight on the
    /// previous hour, then the same hour yesterday, with small weights on
    /// other near-daily lags.
    pub fn demo(length: usize, seed: u64) -> Self {
        let support = vec![1, 2, 5, 6, 16, 22, 23, 24, 48, 143, 144, 160, 191, 216, 238, 240];
        let coefficients = vec![
            0.259, 0.06, 0.02, 0.02, 0.01, 0.02, 0.04, 0.187, 0.06, 0.02, 0.05, 0.01, 0.01, 0.03,
            0.01, 0.03,
        ];
        Self {
            support,
            coefficients,
            intercept: 0.2,
            noise_sd: 0.3,
            length,
            seed,
            daily_profile: None,
            start: 0,
        }
    }

    pub fn max_lag(&self) -> usize {
        self.support.iter().copied().max().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.support.len() != self.coefficients.len() {
            return Err(Error::UnstableSpec(format!(
                "{} lags but {} coefficients",
                self.support.len(),
                self.coefficients.len()
            )));
        }
        if self.support.iter().any(|&l| l == 0 || l > MAX_SPEC_LAG) {
            return Err(Error::UnstableSpec(format!("lags must lie in 1..={MAX_SPEC_LAG}")));
        }
        let l1: f64 = self.coefficients.iter().map(|c| c.abs()).sum();
        if !(l1 < 1.0) {
            return Err(Error::UnstableSpec(format!(
                "sum of |coefficients| is {l1}, must be below 1"
            )));
        }
        if !(self.noise_sd >= 0.0) {
            return Err(Error::UnstableSpec("noise_sd must be >= 0".into()));
        }
        if let Some(p) = &self.daily_profile {
            if p.len() != HOURS_PER_DAY {
                return Err(Error::UnstableSpec("daily profile needs 24 values".into()));
            }
        }
        Ok(())
    }
}

/// Runs the recursion from zero initial values, discards a burn-in of ten
/// times the largest lag, and optionally adds the daily profile. `exogenous`
/// is added inside the recursion at each kept position.
fn simulate(
    spec: &SparseArSpec,
    rng: &mut ChaCha8Rng,
    exogenous: impl Fn(usize) -> f64,
) -> Vec<f64> {
    let burn = 10 * spec.max_lag();
    let total = burn + spec.length;
    let mut y = vec![0.0; total];
    for t in 0..total {
        let mut v = spec.intercept;
        for (&lag, &c) in spec.support.iter().zip(&spec.coefficients) {
            if t >= lag {
                v += c * y[t - lag];
            }
        }
        if t >= burn {
            v += exogenous(t - burn);
        }
        if spec.noise_sd > 0.0 {
            v += spec.noise_sd * standard_normal(rng);
        }
        y[t] = v;
    }
    let mut out = y.split_off(burn);
    if let Some(profile) = &spec.daily_profile {
        for (i, v) in out.iter_mut().enumerate() {
            *v += profile[(spec.start + i as i64).rem_euclid(24) as usize];
        }
    }
    out
}

pub fn generate_sparse_ar(spec: &SparseArSpec, meter_id: &str) -> Result<ConsumptionSeries> {
    spec.validate()?;
    let mut rng = rng_for(spec.seed, 0);
    let values = simulate(spec, &mut rng, |_| 0.0);
    ConsumptionSeries::new(meter_id, spec.start, values)
}

/// Independent Gaussian white-noise meters.
pub fn generate_null_panel(
    num_users: usize,
    length: usize,
    sd: f64,
    seed: u64,
) -> Result<Vec<ConsumptionSeries>> {
    if num_users < 2 {
        return Err(Error::InvalidConfig("a panel needs at least two users".into()));
    }
    (0..num_users)
        .map(|u| {
            let mut rng = rng_for(seed, u as u64);
            let values = (0..length).map(|_| sd * standard_normal(&mut rng)).collect();
            ConsumptionSeries::new(format!("u{u:03}"), 0, values)
        })
        .collect()
}

/// Panel of leader/follower pairs: meter `2i` follows `base`, meter `2i+1`
/// follows `base` plus `coupling` times meter `2i`'s previous-hour value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoupledPanelSpec {
    pub num_users: usize,
    pub base: SparseArSpec,
    pub coupling: f64,
}

impl CoupledPanelSpec {
    pub fn leader_of(&self, user: usize) -> Option<usize> {
        (user % 2 == 1 && self.coupling != 0.0).then(|| user - 1)
    }
}

pub fn generate_coupled_panel(spec: &CoupledPanelSpec) -> Result<Vec<ConsumptionSeries>> {
    spec.base.validate()?;
    if spec.num_users < 2 {
        return Err(Error::InvalidConfig("a panel needs at least two users".into()));
    }
    let mut out: Vec<ConsumptionSeries> = Vec::with_capacity(spec.num_users);
    for u in 0..spec.num_users {
        let mut rng = rng_for(spec.base.seed, u as u64);
        let values = match spec.leader_of(u) {
            Some(leader) => {
                let lv = &out[leader].values;
                let coupling = spec.coupling;
                simulate(&spec.base, &mut rng, |i| if i > 0 { coupling * lv[i - 1] } else { 0.0 })
            }
            None => simulate(&spec.base, &mut rng, |_| 0.0),
        };
        out.push(ConsumptionSeries::new(format!("u{u:03}"), spec.base.start, values)?);
    }
    Ok(out)
}

/// Columns centered (when the problem has an intercept) and response
/// centered, built directly from the problem rows.
fn centered_blocks(problem: &RegressionProblem) -> (DMatrix<f64>, DVector<f64>, DVector<f64>, f64) {
    let first = problem.first_feature();
    let p = problem.num_features();
    let mut x = problem.design.columns(first, p).into_owned();
    let mut y = problem.response.clone();
    let mut means = DVector::zeros(p);
    let mut y_mean = 0.0;
    if problem.has_intercept {
        for j in 0..p {
            means[j] = x.column(j).mean();
            x.column_mut(j).add_scalar_mut(-means[j]);
        }
        y_mean = y.mean();
        y.add_scalar_mut(-y_mean);
    }
    (x, y, means, y_mean)
}

fn l1_objective(x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>, lambda: f64) -> f64 {
    0.5 * (y - x * beta).norm_squared() + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
}

/// Exact LASSO minimizer by enumerating every sign pattern in
/// `{-1, 0, +1}^P`: for each pattern the stationarity equations on its
/// support are solved and the candidate is kept only if its signs agree.
/// The global minimizer is one of these candidates. Intended for `P <= 8`.
pub fn oracle_lasso_grid(problem: &RegressionProblem, lambda: f64) -> Result<Vec<f64>> {
    let p = problem.num_features();
    if p > 8 {
        return Err(Error::TooLarge(p));
    }
    let (x, y, _, _) = centered_blocks(problem);
    let xtx = x.transpose() * &x;
    let xty = x.transpose() * &y;

    // Among sign-consistent candidates the minimizer is the one whose
    // inactive correlations stay within lambda. Selecting on that condition
    // rather than on objective values alone keeps the choice sharp next to a
    // knot, where the objectives of neighbouring supports agree to rounding.
    let tol = 1e-10 * lambda.max(xty.amax()).max(f64::MIN_POSITIVE);
    let violation = |beta: &DVector<f64>, support: &[usize]| -> f64 {
        let corr = &xty - &xtx * beta;
        (0..p)
            .filter(|j| !support.contains(j))
            .map(|j| corr[j].abs() - lambda)
            .fold(0.0, f64::max)
    };
    let zero = DVector::zeros(p);
    let mut best = (violation(&zero, &[]) > tol, l1_objective(&x, &y, &zero, lambda), zero);
    let patterns = 3usize.pow(p as u32);
    for code in 0..patterns {
        let mut signs = vec![0i8; p];
        let mut c = code;
        for s in signs.iter_mut() {
            *s = (c % 3) as i8 - 1;
            c /= 3;
        }
        let support: Vec<usize> = (0..p).filter(|&j| signs[j] != 0).collect();
        let k = support.len();
        if k == 0 {
            continue;
        }
        let a = DMatrix::from_fn(k, k, |r, s| xtx[(support[r], support[s])]);
        let rhs = DVector::from_fn(k, |r, _| xty[support[r]] - lambda * signs[support[r]] as f64);
        let Some(sol) = a.lu().solve(&rhs) else { continue };
        if support
            .iter()
            .zip(sol.iter())
            .any(|(&j, &b)| !(b * signs[j] as f64 > 0.0))
        {
            continue;
        }
        let mut beta = DVector::zeros(p);
        for (&j, &b) in support.iter().zip(sol.iter()) {
            beta[j] = b;
        }
        let candidate = (violation(&beta, &support) > tol, l1_objective(&x, &y, &beta, lambda), beta);
        // Valid candidates (false) sort first, then by objective.
        if (candidate.0, candidate.1) < (best.0, best.1) {
            best = candidate;
        }
    }
    let best = best.2;
    Ok(best.iter().copied().collect())
}

/// Objective of a coefficient vector in the oracle's own arithmetic.
pub fn oracle_objective(problem: &RegressionProblem, beta: &[f64], lambda: f64) -> f64 {
    let (x, y, _, _) = centered_blocks(problem);
    l1_objective(&x, &y, &DVector::from_column_slice(beta), lambda)
}

/// First two entry knots located by a dense penalty grid, then refined by
/// bisection on the number of nonzero oracle coefficients. While only one
/// variable is active its coefficient cannot return to zero, so the first
/// time two coefficients are nonzero marks the second entry.
pub fn oracle_knots(problem: &RegressionProblem, grid_points: usize) -> Result<(f64, f64)> {
    let (x, y, _, _) = centered_blocks(problem);
    let top = (x.transpose() * &y).amax() * 1.01 + 1e-12;
    let nnz = |lambda: f64| -> Result<usize> {
        Ok(oracle_lasso_grid(problem, lambda)?
            .iter()
            .filter(|b| **b != 0.0)
            .count())
    };
    let mut knots = [0.0; 2];
    for (k, knot) in knots.iter_mut().enumerate() {
        let need = k + 1;
        let mut hi = top;
        let mut lo = None;
        for i in 1..=grid_points {
            let lam = top * (1.0 - i as f64 / grid_points as f64);
            if nnz(lam)? >= need {
                lo = Some(lam);
                break;
            }
            hi = lam;
        }
        let Some(mut lo) = lo else { break };
        if lo <= 0.0 && nnz(0.0)? < need {
            break;
        }
        for _ in 0..200 {
            if hi - lo <= 1e-13 * hi {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if nnz(mid)? >= need {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        *knot = 0.5 * (lo + hi);
    }
    Ok((knots[0], knots[1]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubsetChoice {
    pub size: usize,
    pub support: Vec<usize>,
    pub rss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BestSubsets {
    /// Entry `k` is the best support of size `k`.
    pub per_size: Vec<SubsetChoice>,
    /// Non-empty supports fitted.
    pub evaluated: usize,
}

/// Exhaustive least squares over every support of size `<= max_k`.
pub fn oracle_best_subset(problem: &RegressionProblem, max_k: usize) -> Result<BestSubsets> {
    let p = problem.num_features();
    if p > 12 {
        return Err(Error::TooLarge(p));
    }
    let (x, y, _, _) = centered_blocks(problem);
    let xtx = x.transpose() * &x;
    let xty = x.transpose() * &y;
    let yty = y.norm_squared();
    let max_k = max_k.min(p);
    let mut per_size: Vec<SubsetChoice> = (0..=max_k)
        .map(|size| SubsetChoice {
            size,
            support: Vec::new(),
            rss: if size == 0 { yty } else { f64::INFINITY },
        })
        .collect();
    let mut evaluated = 0;
    for mask in 1u32..(1u32 << p) {
        let support: Vec<usize> = (0..p).filter(|&j| mask & (1 << j) != 0).collect();
        let k = support.len();
        if k > max_k {
            continue;
        }
        evaluated += 1;
        let a = DMatrix::from_fn(k, k, |r, s| xtx[(support[r], support[s])]);
        let b = DVector::from_fn(k, |r, _| xty[support[r]]);
        let Some(chol) = a.cholesky() else { continue };
        let beta = chol.solve(&b);
        let rss = (yty - beta.dot(&b)).max(0.0);
        if rss < per_size[k].rss {
            per_size[k] = SubsetChoice { size: k, support, rss };
        }
    }
    Ok(BestSubsets { per_size, evaluated })
}
