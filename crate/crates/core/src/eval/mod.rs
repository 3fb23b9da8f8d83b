//! Forecast error metrics, information criteria and the sliding-window
//! backtest.

pub mod backtest;
pub mod report;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::design::RegressionProblem;
use crate::error::{Error, Result};
use crate::solver::LassoFit;

pub use backtest::{pair_test_window, run_backtest, BacktestOptions};
pub use report::{BacktestReport, MethodSummary, UserSummary, WindowRecord};

/// Entries with `|y| < MAPE_FLOOR` are left out of percentage errors.
pub const MAPE_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "averaging")]
    Averaging,
    #[serde(rename = "lw")]
    LastWeek,
    #[serde(rename = "ar1")]
    Ar1,
    #[serde(rename = "es")]
    ExpSmoothing,
    #[serde(rename = "lasso")]
    Lasso,
    #[serde(rename = "lasso+pair")]
    LassoPair,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Averaging,
        Method::LastWeek,
        Method::Ar1,
        Method::ExpSmoothing,
        Method::Lasso,
        Method::LassoPair,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Averaging => "averaging",
            Method::LastWeek => "lw",
            Method::Ar1 => "ar1",
            Method::ExpSmoothing => "es",
            Method::Lasso => "lasso",
            Method::LassoPair => "lasso+pair",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.trim())
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub mse: f64,
    pub mae: f64,
    /// `None` when every actual value was below [`MAPE_FLOOR`].
    pub mape: Option<f64>,
    pub nrmsd: f64,
    pub n: usize,
    pub mape_skipped: usize,
    pub ybar_train: f64,
}

pub fn compute_metrics(actual: &[f64], predicted: &[f64], ybar_train: f64) -> Result<MetricSet> {
    if actual.len() != predicted.len() || actual.is_empty() {
        return Err(Error::LengthMismatch(actual.len(), predicted.len()));
    }
    if ybar_train == 0.0 || !ybar_train.is_finite() {
        return Err(Error::ZeroTrainMean);
    }
    let n = actual.len();
    let (mut se, mut ae, mut pe) = (0.0, 0.0, 0.0);
    let mut skipped = 0;
    for (&y, &yhat) in actual.iter().zip(predicted) {
        let e = (y - yhat).abs();
        se += e * e;
        ae += e;
        if y.abs() < MAPE_FLOOR {
            skipped += 1;
        } else {
            pe += e / y.abs();
        }
    }
    let mse = se / n as f64;
    Ok(MetricSet {
        mse,
        mae: ae / n as f64,
        mape: (skipped < n).then(|| pe / (n - skipped) as f64),
        nrmsd: mse.sqrt() / ybar_train.abs(),
        n,
        mape_skipped: skipped,
        ybar_train,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AggregateMode {
    Median,
    /// Mean after dropping this fraction of values from each tail.
    TrimmedMean(f64),
}

pub fn median(values: &[f64]) -> Result<f64> {
    aggregate(values, AggregateMode::Median)
}

pub fn aggregate(values: &[f64], mode: AggregateMode) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    Ok(match mode {
        AggregateMode::Median => {
            if n % 2 == 1 {
                sorted[n / 2]
            } else {
                0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
            }
        }
        AggregateMode::TrimmedMean(frac) => {
            let mut cut = (n as f64 * frac).floor() as usize;
            if n >= 3 {
                cut = cut.max(1);
            }
            cut = cut.min((n - 1) / 2);
            let kept = &sorted[cut..n - cut];
            kept.iter().sum::<f64>() / kept.len() as f64
        }
    })
}

/// Sample mean and standard deviation (n - 1 denominator; 0 for one value).
pub fn mean_sd(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::Empty);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Ok((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    Ok((mean, var.sqrt()))
}

/// `(2k + n ln RSS, n ln(RSS / n) + k ln n)`. The AIC omits its additive
/// constant, so only differences between models are meaningful.
pub fn aic_bic(rss: f64, n: usize, k: usize) -> Result<(f64, f64)> {
    if !(rss > 0.0) || !rss.is_finite() {
        return Err(Error::NonPositiveRss(rss));
    }
    if n == 0 {
        return Err(Error::Empty);
    }
    let (nf, kf) = (n as f64, k as f64);
    Ok((2.0 * kf + nf * rss.ln(), nf * (rss / nf).ln() + kf * nf.ln()))
}

/// In-sample residual sum of squares of a LASSO fit.
pub fn lasso_rss(problem: &RegressionProblem, fit: &LassoFit) -> f64 {
    let first = problem.first_feature();
    (0..problem.rows())
        .map(|r| {
            let mut pred = fit.intercept;
            for &j in &fit.active_set {
                pred += fit.coefficients[j] * problem.design[(r, first + j)];
            }
            let e = problem.response[r] - pred;
            e * e
        })
        .sum()
}
