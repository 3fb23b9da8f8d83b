//! Reference predictors: same-hour averaging, last week's value, AR(1) and
//! level-only exponential smoothing.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::design::build_lag_matrix;
use crate::error::{Error, Result};
use crate::series::Calendar;
use crate::solver::fit_ols;

pub const AVERAGING_DAYS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BaselineKind {
    Averaging10,
    LastWeek,
    Ar1,
    ExpSmoothing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum BaselineModel {
    Averaging10,
    LastWeek { offset: usize },
    Ar1 { intercept: f64, slope: f64, degenerate: bool },
    ExpSmoothing { weight: f64, initial_level: f64, level: f64 },
}

impl BaselineModel {
    pub fn kind(&self) -> BaselineKind {
        match self {
            BaselineModel::Averaging10 => BaselineKind::Averaging10,
            BaselineModel::LastWeek { .. } => BaselineKind::LastWeek,
            BaselineModel::Ar1 { .. } => BaselineKind::Ar1,
            BaselineModel::ExpSmoothing { .. } => BaselineKind::ExpSmoothing,
        }
    }

    /// One-step forecast of position `t`.
    pub fn predict(&self, values: &[f64], t: usize) -> Result<f64> {
        match *self {
            BaselineModel::Averaging10 => predict_averaging10(values, t),
            BaselineModel::LastWeek { offset } => predict_lagged(values, t, offset),
            BaselineModel::Ar1 { intercept, slope, .. } => {
                if t == 0 || t > values.len() {
                    return Err(Error::InsufficientHistory { need: 1, have: t });
                }
                Ok(intercept + slope * values[t - 1])
            }
            BaselineModel::ExpSmoothing { level, .. } => Ok(level),
        }
    }
}

/// Mean of the same hour on each of the previous ten days.
pub fn predict_averaging10(values: &[f64], t: usize) -> Result<f64> {
    let need = 24 * AVERAGING_DAYS;
    if t < need || t > values.len() {
        return Err(Error::InsufficientHistory { need, have: t.min(values.len()) });
    }
    let sum: f64 = (1..=AVERAGING_DAYS).map(|k| values[t - 24 * k]).sum();
    Ok(sum / AVERAGING_DAYS as f64)
}

fn predict_lagged(values: &[f64], t: usize, offset: usize) -> Result<f64> {
    if t < offset || t > values.len() {
        return Err(Error::InsufficientHistory { need: offset, have: t.min(values.len()) });
    }
    Ok(values[t - offset])
}

/// Value at the same hour one week earlier: 168 positions back on an hourly
/// calendar, 120 on a weekday-only calendar.
pub fn predict_last_week(values: &[f64], t: usize, calendar: Calendar) -> Result<f64> {
    predict_lagged(values, t, calendar.week_offset())
}

/// Least-squares AR(1) on the window. A flat window has no defined slope;
/// it is fitted as its mean and flagged.
pub fn fit_ar1(values: &[f64], window: Range<usize>) -> Result<BaselineModel> {
    if window.len() < 3 || window.end > values.len() {
        return Err(Error::RangeTooShort { len: window.len(), need: 3 });
    }
    let problem = build_lag_matrix(values, 1, window.clone())?;
    match fit_ols(&problem) {
        Ok(fit) => Ok(BaselineModel::Ar1 {
            intercept: fit.coefficients[0],
            slope: fit.coefficients[1],
            degenerate: false,
        }),
        Err(Error::RankDeficient) => {
            let w = &values[window];
            Ok(BaselineModel::Ar1 {
                intercept: w.iter().sum::<f64>() / w.len() as f64,
                slope: 0.0,
                degenerate: true,
            })
        }
        Err(e) => Err(e),
    }
}

const ES_INIT_POINTS: usize = 24;
const GOLDEN_TOL: f64 = 1e-4;

/// Runs `l_t = w y_t + (1 - w) l_{t-1}` over `obs`; returns the one-step
/// squared error sum and the final level.
pub fn smooth(obs: &[f64], weight: f64, initial_level: f64) -> (f64, f64) {
    let mut level = initial_level;
    let mut sse = 0.0;
    for &y in obs {
        let e = y - level;
        sse += e * e;
        level = weight * y + (1.0 - weight) * level;
    }
    (sse, level)
}

/// Golden-section minimizer of a unimodal function on `[lo, hi]`.
pub fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    while hi - lo > tol {
        if fc <= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = f(d);
        }
    }
    let mid = 0.5 * (lo + hi);
    // The interval endpoints are candidates too: SSE is often minimized at
    // w = 0 or w = 1 exactly.
    [(mid, f(mid)), (0.0, f(0.0)), (1.0, f(1.0))]
        .into_iter()
        .fold((mid, f64::INFINITY), |best, (x, fx)| if fx < best.1 { (x, fx) } else { best })
        .0
}

/// Simple exponential smoothing; the weight minimizes in-sample one-step SSE.
pub fn fit_exp_smoothing(values: &[f64], window: Range<usize>) -> Result<BaselineModel> {
    fit_exp_smoothing_with(values, window, None)
}

/// As [`fit_exp_smoothing`], optionally with a fixed weight.
pub fn fit_exp_smoothing_with(
    values: &[f64],
    window: Range<usize>,
    weight: Option<f64>,
) -> Result<BaselineModel> {
    if window.len() < 10 || window.end > values.len() {
        return Err(Error::RangeTooShort { len: window.len(), need: 10 });
    }
    let obs = &values[window];
    let init_n = ES_INIT_POINTS.min(obs.len());
    let initial_level = obs[..init_n].iter().sum::<f64>() / init_n as f64;
    let weight = match weight {
        Some(w) if (0.0..=1.0).contains(&w) => w,
        Some(w) => return Err(Error::InvalidConfig(format!("smoothing weight {w} outside [0, 1]"))),
        None => golden_section(|w| smooth(obs, w, initial_level).0, 0.0, 1.0, GOLDEN_TOL),
    };
    let (_, level) = smooth(obs, weight, initial_level);
    Ok(BaselineModel::ExpSmoothing {
        weight,
        initial_level,
        level,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{rng_for, standard_normal};
    use proptest::prelude::*;

    #[test]
    fn averaging_examples() {
        let daily: Vec<f64> = (0..24 * 12).map(|i| (i % 24) as f64 * 0.5).collect();
        assert_eq!(predict_averaging10(&daily, 250).unwrap(), daily[250]);
        assert_eq!(predict_averaging10(&[3.0; 300], 260).unwrap(), 3.0);
        let mut ramp = vec![0.0; 241];
        for k in 1..=10 {
            ramp[240 - 24 * k] = (11 - k) as f64;
        }
        assert_eq!(predict_averaging10(&ramp, 240).unwrap(), 5.5);
        assert!(matches!(
            predict_averaging10(&[1.0; 300], 239),
            Err(Error::InsufficientHistory { need: 240, .. })
        ));
    }

    #[test]
    fn last_week_examples() {
        let weekly: Vec<f64> = (0..168 * 3).map(|i| ((i % 168) as f64).sqrt()).collect();
        assert_eq!(predict_last_week(&weekly, 400, Calendar::Hourly).unwrap(), weekly[400]);
        assert_eq!(predict_last_week(&[2.0; 200], 170, Calendar::Hourly).unwrap(), 2.0);
        let idx: Vec<f64> = (0..400).map(|i| i as f64).collect();
        assert_eq!(predict_last_week(&idx, 300, Calendar::Hourly).unwrap(), 132.0);
        assert_eq!(predict_last_week(&idx, 300, Calendar::WeekdayContiguous).unwrap(), 180.0);
        assert!(predict_last_week(&idx, 100, Calendar::Hourly).is_err());
    }

    #[test]
    fn ar1_noiseless_and_constant() {
        let mut y = vec![4.0];
        for t in 1..50 {
            y.push(0.5 * y[t - 1] + 1.0);
        }
        match fit_ar1(&y, 0..30).unwrap() {
            BaselineModel::Ar1 { intercept, slope, degenerate } => {
                assert!((intercept - 1.0).abs() < 1e-8);
                assert!((slope - 0.5).abs() < 1e-8);
                assert!(!degenerate);
            }
            other => panic!("unexpected {other:?}"),
        }
        let flat = fit_ar1(&[1.7; 20], 0..20).unwrap();
        assert!(matches!(flat, BaselineModel::Ar1 { degenerate: true, slope, .. } if slope == 0.0));
        assert!((flat.predict(&[1.7; 20], 20).unwrap() - 1.7).abs() < 1e-12);
        assert!(fit_ar1(&[1.0, 2.0], 0..2).is_err());
    }

    #[test]
    fn ar1_white_noise_slope_near_zero() {
        let t = 500;
        let mut inside = 0;
        for seed in 0..100 {
            let mut rng = rng_for(seed, 0);
            let y: Vec<f64> = (0..t).map(|_| standard_normal(&mut rng)).collect();
            if let BaselineModel::Ar1 { slope, .. } = fit_ar1(&y, 0..t).unwrap() {
                if slope.abs() < 3.0 / (t as f64).sqrt() {
                    inside += 1;
                }
            }
        }
        assert!(inside >= 97, "{inside}");
    }

    #[test]
    fn es_examples() {
        let y: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin()).collect();
        let unit = fit_exp_smoothing_with(&y, 0..40, Some(1.0)).unwrap();
        assert_eq!(unit.predict(&y, 40).unwrap(), y[39]);
        let flat = fit_exp_smoothing(&[0.8; 30], 0..30).unwrap();
        assert!((flat.predict(&[0.8; 30], 30).unwrap() - 0.8).abs() < 1e-12);
        assert!(fit_exp_smoothing(&y, 0..9).is_err());
    }

    #[test]
    fn es_on_noise_stays_near_mean() {
        let (mu, sigma) = (5.0, 2.0);
        let mut ok = 0;
        for seed in 0..100 {
            let mut rng = rng_for(seed, 1);
            let y: Vec<f64> = (0..400).map(|_| mu + sigma * standard_normal(&mut rng)).collect();
            let m = fit_exp_smoothing(&y, 0..400).unwrap();
            if let BaselineModel::ExpSmoothing { weight, level, .. } = m {
                if weight < 0.2 && (level - mu).abs() <= 3.0 * sigma / 24f64.sqrt() {
                    ok += 1;
                }
            }
        }
        assert!(ok >= 95, "{ok}");
    }

    #[test]
    fn golden_section_finds_interior_minimum() {
        let w = golden_section(|x| (x - 0.3) * (x - 0.3), 0.0, 1.0, 1e-6);
        assert!((w - 0.3).abs() < 1e-5);
    }

    proptest! {
        #[test]
        fn es_forecast_within_window_range(y in prop::collection::vec(-50.0f64..50.0, 10..80)) {
            let m = fit_exp_smoothing(&y, 0..y.len()).unwrap();
            let pred = m.predict(&y, y.len()).unwrap();
            let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(pred >= lo - 1e-9 && pred <= hi + 1e-9);
            prop_assert!(pred.is_finite());
        }
    }
}
