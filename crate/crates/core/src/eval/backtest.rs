//! Sliding-window one-step backtest over a panel of meters.

use std::collections::BTreeMap;
use std::ops::Range;
use std::time::{Duration, Instant};

use log::{debug, info};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::report::{BacktestReport, BacktestSettings, Failure, MethodTiming, PairingRecord, WindowRecord};
use super::{Method, MAPE_FLOOR};
use crate::baselines::{
    fit_ar1, fit_exp_smoothing, predict_averaging10, predict_last_week, AVERAGING_DAYS,
};
use crate::design::{build_lag_matrix, standardize_columns, Panel};
use crate::error::{Error, Result};
use crate::series::{daily_profile, Calendar, ConsumptionSeries, DailyProfile, HOURS_PER_DAY};
use crate::significance::{paired_forecast_model, run_pair_test, PairTestOptions};
use crate::solver::{fit_lasso_cv, CdOptions, GridOptions, LassoFit, LinearModel};
use crate::window::{sliding_windows_from, EvalWindow};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestOptions {
    pub methods: Vec<Method>,
    pub window_sizes: Vec<usize>,
    pub horizon: usize,
    pub max_lag: usize,
    pub cv_folds: usize,
    pub grid: GridOptions,
    pub cd: CdOptions,
    pub detrend: bool,
    pub weekday_only: bool,
    pub pair: PairTestOptions,
    /// Forecast only the first this-many test points of each series.
    pub max_test_points: Option<usize>,
    /// Worker threads; `None` uses the global rayon pool.
    pub threads: Option<usize>,
    pub seed: u64,
}

impl Default for BacktestOptions {
    fn default() -> Self {
        Self {
            methods: Method::ALL.to_vec(),
            window_sizes: vec![720, 960, 1200],
            horizon: 1,
            max_lag: 240,
            cv_folds: 10,
            grid: GridOptions::default(),
            cd: CdOptions::default(),
            detrend: true,
            weekday_only: false,
            pair: PairTestOptions::default(),
            max_test_points: None,
            threads: None,
            seed: 0,
        }
    }
}

impl BacktestOptions {
    pub fn validate(&self) -> Result<()> {
        if self.horizon != 1 {
            return Err(Error::InvalidConfig(format!(
                "only one-step forecasts are supported, got horizon {}",
                self.horizon
            )));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidConfig("no methods selected".into()));
        }
        if self.window_sizes.is_empty() {
            return Err(Error::InvalidConfig("no window sizes given".into()));
        }
        if self.max_lag == 0 {
            return Err(Error::InvalidConfig("max_lag must be at least 1".into()));
        }
        if self.cv_folds < 2 {
            return Err(Error::InvalidConfig("cv_folds must be at least 2".into()));
        }
        if !(self.pair.alpha > 0.0 && self.pair.alpha < 1.0) {
            return Err(Error::InvalidConfig(format!("alpha must lie in (0, 1), got {}", self.pair.alpha)));
        }
        if self.threads == Some(0) {
            return Err(Error::InvalidConfig("threads must be at least 1".into()));
        }
        let uses_lasso = self.methods.iter().any(|m| matches!(m, Method::Lasso | Method::LassoPair));
        for &w in &self.window_sizes {
            if w < HOURS_PER_DAY {
                return Err(Error::InvalidConfig(format!("window {w} is shorter than a day")));
            }
            if uses_lasso && w < self.max_lag + 2 * self.cv_folds {
                return Err(Error::InvalidConfig(format!(
                    "window {w} leaves too few rows after {} lags for {}-fold CV",
                    self.max_lag, self.cv_folds
                )));
            }
        }
        Ok(())
    }

    pub fn settings(&self) -> BacktestSettings {
        BacktestSettings {
            methods: self.methods.clone(),
            window_sizes: self.window_sizes.clone(),
            horizon: self.horizon,
            max_lag: self.max_lag,
            cv_folds: self.cv_folds,
            detrend: self.detrend,
            weekday_only: self.weekday_only,
            alpha: self.pair.alpha,
            seed: self.seed,
            max_test_points: self.max_test_points,
        }
    }

    /// First forecast position, shared by every window size so that all
    /// methods and sizes are scored on the same hours.
    fn first_test(&self, calendar: Calendar) -> usize {
        let longest = self.window_sizes.iter().copied().max().unwrap_or(0);
        longest
            .max(HOURS_PER_DAY * AVERAGING_DAYS)
            .max(calendar.week_offset())
    }

    fn dedup_methods(&self) -> Vec<Method> {
        let mut out: Vec<Method> = Vec::new();
        for &m in &self.methods {
            if !out.contains(&m) {
                out.push(m);
            }
        }
        out
    }
}

type TimingKey = (Method, usize);

#[derive(Default)]
struct UserOutcome {
    records: Vec<WindowRecord>,
    failures: Vec<Failure>,
    pairings: Vec<PairingRecord>,
    timings: BTreeMap<TimingKey, (Duration, usize)>,
}

/// Training-window view of one meter: the daily profile estimated on the
/// window and the detrended values up to and including the test position.
struct Prepared {
    profile: DailyProfile,
    detrended: Vec<f64>,
}

fn prepare(series: &ConsumptionSeries, window: &EvalWindow, detrend: bool) -> Result<Prepared> {
    let profile = if detrend {
        daily_profile(series, window.train.clone())?
    } else {
        DailyProfile::zero(series.hour_of_day(0))
    };
    let end = (window.test + 1).min(series.len());
    let detrended = (0..end)
        .map(|i| series.values[i] - profile.at(i))
        .collect();
    Ok(Prepared { profile, detrended })
}

fn lasso_rows(window: &EvalWindow, max_lag: usize) -> Range<usize> {
    window.train.start + max_lag..window.train.end
}

fn fit_window_lasso(prep: &Prepared, window: &EvalWindow, opts: &BacktestOptions) -> Result<LassoFit> {
    let problem = build_lag_matrix(&prep.detrended, opts.max_lag, window.train.clone())?;
    let problem = standardize_columns(&problem)?;
    let (fit, _) = fit_lasso_cv(&problem, opts.cv_folds, &opts.grid, &opts.cd)?;
    if !fit.converged {
        debug!("lasso hit the iteration cap at lambda {}", fit.lambda);
    }
    Ok(fit)
}

enum Pairing {
    Undecided,
    Unpaired,
    Paired(usize),
    Failed,
}

/// Meters that share the target's calendar, start and length.
fn aligned_candidates(all: &[ConsumptionSeries], target: usize) -> Vec<usize> {
    let t = &all[target];
    (0..all.len())
        .filter(|&j| {
            j != target
                && all[j].len() == t.len()
                && all[j].start == t.start
                && all[j].calendar == t.calendar
        })
        .collect()
}

fn decide_pairing(
    all: &[ConsumptionSeries],
    target: usize,
    prep: &Prepared,
    fit: &LassoFit,
    window: &EvalWindow,
    opts: &BacktestOptions,
) -> Result<(Pairing, Option<PairingRecord>)> {
    let rows = lasso_rows(window, opts.max_lag);
    let mut ids = Vec::new();
    let mut values = Vec::new();
    for j in aligned_candidates(all, target) {
        let p = prepare(&all[j], window, opts.detrend)?;
        let lagged = &p.detrended[rows.start - 1..rows.end - 1];
        let first = lagged[0];
        if lagged.iter().all(|v| (v - first).abs() <= 1e-12 * first.abs().max(1.0)) {
            debug!("skipping flat candidate {}", all[j].meter_id);
            continue;
        }
        ids.push(j);
        values.push(p.detrended);
    }
    if ids.is_empty() {
        return Ok((Pairing::Unpaired, None));
    }
    let others: Vec<(&str, &[f64])> = ids
        .iter()
        .zip(&values)
        .map(|(&j, v)| (all[j].meter_id.as_str(), v.as_slice()))
        .collect();
    let target_id = &all[target].meter_id;
    let result = run_pair_test(
        target_id,
        &prep.detrended,
        &LinearModel::from_lasso(fit),
        &others,
        rows,
        &opts.pair,
    )?;
    let record = PairingRecord {
        target_id: target_id.clone(),
        window: window.train.len(),
        paired_id: result.selected_candidate.clone(),
        lambda1: result.lambda1,
        lambda2: result.lambda2,
        sigma2_hat: result.sigma2_hat,
        f1: result.f1,
        p_value: result.p_value,
        accepted: result.accepted,
        candidates: ids.len(),
    };
    let pairing = match (&result.selected_candidate, result.accepted) {
        (Some(id), true) => {
            let j = ids
                .iter()
                .copied()
                .find(|&j| &all[j].meter_id == id)
                .ok_or_else(|| Error::MisalignedSeries(format!("unknown candidate {id}")))?;
            Pairing::Paired(j)
        }
        _ => Pairing::Unpaired,
    };
    Ok((pairing, Some(record)))
}

/// Runs the pairing test for `all[target]` on one training range, as the
/// backtest does on the first window of each size. Returns `None` when no
/// aligned, non-constant candidate exists.
pub fn pair_test_window(
    all: &[ConsumptionSeries],
    target: usize,
    train: Range<usize>,
    opts: &BacktestOptions,
) -> Result<Option<PairingRecord>> {
    let series = all.get(target).ok_or(Error::Empty)?;
    if train.end > series.len() {
        return Err(Error::InsufficientHistory {
            need: train.end,
            have: series.len(),
        });
    }
    let window = EvalWindow {
        test: train.end,
        train,
    };
    let prep = prepare(series, &window, opts.detrend)?;
    let fit = fit_window_lasso(&prep, &window, opts)?;
    Ok(decide_pairing(all, target, &prep, &fit, &window, opts)?.1)
}

fn paired_prediction(
    all: &[ConsumptionSeries],
    partner: usize,
    prep: &Prepared,
    fit: &LassoFit,
    window: &EvalWindow,
    opts: &BacktestOptions,
) -> Result<f64> {
    let other = prepare(&all[partner], window, opts.detrend)?;
    let pid = all[partner].meter_id.as_str();
    let rows = lasso_rows(window, opts.max_lag);
    let model = match paired_forecast_model(fit, pid, &prep.detrended, &other.detrended, rows) {
        Ok(m) => m.model,
        Err(Error::RankDeficient) | Err(Error::Underdetermined { .. }) => {
            debug!("paired refit with {pid} is singular; using the unpaired fit");
            LinearModel::from_lasso(fit)
        }
        Err(e) => return Err(e),
    };
    let panel = Panel {
        target: &prep.detrended,
        others: vec![(pid, &other.detrended)],
    };
    model.predict_at(&panel, window.test)
}

fn backtest_user(all: &[ConsumptionSeries], user: usize, opts: &BacktestOptions) -> UserOutcome {
    let series = &all[user];
    let methods = opts.dedup_methods();
    let needs_lasso = methods.iter().any(|m| matches!(m, Method::Lasso | Method::LassoPair));
    let mut out = UserOutcome::default();
    let first_test = opts.first_test(series.calendar);

    for &w in &opts.window_sizes {
        let mut windows = sliding_windows_from(series.len(), w, opts.horizon, first_test);
        if let Some(cap) = opts.max_test_points {
            windows.truncate(cap);
        }
        let mut per_method: Vec<Option<Vec<WindowRecord>>> = methods.iter().map(|_| Some(Vec::new())).collect();
        let fail = |out: &mut UserOutcome, slot: &mut Option<Vec<WindowRecord>>, m: Method, e: Error| {
            debug!("{} {} W={}: {}", series.meter_id, m, w, e);
            *slot = None;
            out.failures.push(Failure {
                user: series.meter_id.clone(),
                method: m,
                window: w,
                error: e.to_string(),
            });
        };
        if windows.is_empty() {
            let need = first_test.max(w) + 1;
            for (k, &m) in methods.iter().enumerate() {
                fail(&mut out, &mut per_method[k], m, Error::InsufficientHistory { need, have: series.len() });
            }
            continue;
        }
        let mut pairing = Pairing::Undecided;

        for window in &windows {
            if per_method.iter().all(Option::is_none) {
                break;
            }
            let prep = match prepare(series, window, opts.detrend) {
                Ok(p) => p,
                Err(e) => {
                    for (k, &m) in methods.iter().enumerate() {
                        if per_method[k].is_some() {
                            fail(&mut out, &mut per_method[k], m, e.clone());
                        }
                    }
                    break;
                }
            };
            let trend = prep.profile.at(window.test);
            let train = window.train.clone();
            let ybar_train = series.values[train.clone()].iter().sum::<f64>() / train.len() as f64;

            let lasso_live = methods.iter().enumerate().any(|(k, m)| {
                per_method[k].is_some() && matches!(m, Method::Lasso | Method::LassoPair)
            });
            let mut lasso_time = Duration::ZERO;
            let lasso = (needs_lasso && lasso_live).then(|| {
                let t0 = Instant::now();
                let fit = fit_window_lasso(&prep, window, opts);
                lasso_time = t0.elapsed();
                fit
            });

            for (k, &m) in methods.iter().enumerate() {
                if per_method[k].is_none() {
                    continue;
                }
                let t0 = Instant::now();
                let pred = match m {
                    Method::Averaging => predict_averaging10(&series.values, window.test),
                    Method::LastWeek => predict_last_week(&series.values, window.test, series.calendar),
                    Method::Ar1 => fit_ar1(&prep.detrended, train.clone())
                        .and_then(|b| b.predict(&prep.detrended, window.test))
                        .map(|p| p + trend),
                    Method::ExpSmoothing => fit_exp_smoothing(&prep.detrended, train.clone())
                        .and_then(|b| b.predict(&prep.detrended, window.test))
                        .map(|p| p + trend),
                    Method::Lasso => match lasso.as_ref().expect("lasso fitted") {
                        Ok(fit) => LinearModel::from_lasso(fit)
                            .predict_at(prep.detrended.as_slice(), window.test)
                            .map(|p| p + trend),
                        Err(e) => Err(e.clone()),
                    },
                    Method::LassoPair => match lasso.as_ref().expect("lasso fitted") {
                        Ok(fit) => {
                            if matches!(pairing, Pairing::Undecided) {
                                match decide_pairing(all, user, &prep, fit, window, opts) {
                                    Ok((p, record)) => {
                                        pairing = p;
                                        out.pairings.extend(record);
                                    }
                                    Err(e) => {
                                        pairing = Pairing::Failed;
                                        fail(&mut out, &mut per_method[k], m, e);
                                        continue;
                                    }
                                }
                            }
                            match pairing {
                                Pairing::Paired(j) => paired_prediction(all, j, &prep, fit, window, opts),
                                _ => LinearModel::from_lasso(fit)
                                    .predict_at(prep.detrended.as_slice(), window.test),
                            }
                            .map(|p| p + trend)
                        }
                        Err(e) => Err(e.clone()),
                    },
                };
                let mut elapsed = t0.elapsed();
                if matches!(m, Method::Lasso | Method::LassoPair) {
                    elapsed += lasso_time;
                }
                match pred {
                    Ok(predicted) => {
                        let entry = out.timings.entry((m, w)).or_default();
                        entry.0 += elapsed;
                        entry.1 += 1;
                        let actual = series.values[window.test];
                        let e = (actual - predicted).abs();
                        per_method[k].as_mut().expect("live method").push(WindowRecord {
                            user: series.meter_id.clone(),
                            method: m,
                            window: w,
                            window_start: train.start,
                            test: window.test,
                            actual,
                            predicted,
                            ybar_train,
                            abs_err: e,
                            sq_err: e * e,
                            pct_err: (actual.abs() >= MAPE_FLOOR).then(|| e / actual.abs()),
                        });
                    }
                    Err(e) => fail(&mut out, &mut per_method[k], m, e),
                }
            }
        }
        for recs in per_method.into_iter().flatten() {
            out.records.extend(recs);
        }
    }
    out
}

/// Slides every window size over every meter, fits each method on the
/// training interval and scores the one-step forecast. Users are processed
/// in parallel and merged in input order, so the report does not depend on
/// the thread count. A method failing for a user is recorded and skipped.
pub fn run_backtest(series: &[ConsumptionSeries], opts: &BacktestOptions) -> Result<BacktestReport> {
    opts.validate()?;
    if series.is_empty() {
        return Err(Error::Empty);
    }
    let mut seen = std::collections::BTreeSet::new();
    for s in series {
        if !seen.insert(s.meter_id.as_str()) {
            return Err(Error::InvalidConfig(format!("duplicate meter {}", s.meter_id)));
        }
    }
    let prepared: Vec<ConsumptionSeries> = if opts.weekday_only {
        series.iter().map(ConsumptionSeries::weekdays_only).collect()
    } else {
        series.to_vec()
    };
    let started = Instant::now();
    let work = || -> Vec<UserOutcome> {
        (0..prepared.len())
            .into_par_iter()
            .map(|u| backtest_user(&prepared, u, opts))
            .collect()
    };
    let outcomes = match opts.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    };

    let mut records = Vec::new();
    let mut failures = Vec::new();
    let mut pairings = Vec::new();
    let mut timing_totals: BTreeMap<TimingKey, (Duration, usize)> = BTreeMap::new();
    for o in outcomes {
        records.extend(o.records);
        failures.extend(o.failures);
        pairings.extend(o.pairings);
        for (key, (d, n)) in o.timings {
            let e = timing_totals.entry(key).or_default();
            e.0 += d;
            e.1 += n;
        }
    }
    let timings = timing_totals
        .into_iter()
        .map(|((method, window), (d, fits))| MethodTiming {
            method,
            window,
            fits,
            total_seconds: d.as_secs_f64(),
            mean_seconds: if fits > 0 { d.as_secs_f64() / fits as f64 } else { 0.0 },
        })
        .collect();
    info!(
        "backtest of {} meters finished in {:.1}s with {} failures",
        prepared.len(),
        started.elapsed().as_secs_f64(),
        failures.len()
    );
    BacktestReport::assemble(opts.settings(), records, failures, pairings, timings)
}
