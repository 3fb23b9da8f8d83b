//! Backtest results: raw per-window records, per-user and per-method
//! aggregates, and their on-disk forms.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{mean_sd, median, Method};
use crate::error::{Error, Result};

/// One forecast. Positions index the (possibly weekday-filtered) series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowRecord {
    pub user: String,
    pub method: Method,
    #[serde(rename = "W")]
    pub window: usize,
    pub window_start: usize,
    pub test: usize,
    pub actual: f64,
    pub predicted: f64,
    pub ybar_train: f64,
    pub abs_err: f64,
    pub sq_err: f64,
    /// Empty when `|actual|` is below the MAPE floor.
    pub pct_err: Option<f64>,
}

impl WindowRecord {
    /// `|e| / |ybar_train|`, the single-point normalized error.
    pub fn nrmsd(&self) -> Option<f64> {
        (self.ybar_train != 0.0).then(|| self.sq_err.sqrt() / self.ybar_train.abs())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub user: String,
    pub method: Method,
    #[serde(rename = "W")]
    pub window: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairingRecord {
    pub target_id: String,
    #[serde(rename = "W")]
    pub window: usize,
    /// Best candidate on the path, whether or not it was accepted.
    pub paired_id: Option<String>,
    pub lambda1: f64,
    pub lambda2: f64,
    pub sigma2_hat: Option<f64>,
    #[serde(rename = "F1")]
    pub f1: f64,
    pub p_value: f64,
    pub accepted: bool,
    pub candidates: usize,
}

/// Medians over one user's windows for one method and window size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserSummary {
    pub user: String,
    pub method: Method,
    #[serde(rename = "W")]
    pub window: usize,
    pub windows: usize,
    pub median_ape: Option<f64>,
    pub ape_skipped: usize,
    pub median_abs_err: f64,
    pub median_sq_err: f64,
    pub median_nrmsd: Option<f64>,
}

/// Mean and spread across users of the per-user medians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    #[serde(rename = "W")]
    pub window: usize,
    pub users: usize,
    pub failed_users: usize,
    pub mean_mape: Option<f64>,
    pub sd_mape: Option<f64>,
    pub mean_mae: Option<f64>,
    pub mean_mse: Option<f64>,
    pub mean_nrmsd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodTiming {
    pub method: Method,
    #[serde(rename = "W")]
    pub window: usize,
    pub fits: usize,
    pub total_seconds: f64,
    /// Average time per user per training window.
    pub mean_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestSettings {
    pub methods: Vec<Method>,
    pub window_sizes: Vec<usize>,
    pub horizon: usize,
    pub max_lag: usize,
    pub cv_folds: usize,
    pub detrend: bool,
    pub weekday_only: bool,
    pub alpha: f64,
    pub seed: u64,
    pub max_test_points: Option<usize>,
}

/// Everything except the raw records and wall-clock timings; this is the
/// JSON summary file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub settings: BacktestSettings,
    pub summary: Vec<MethodSummary>,
    pub users: Vec<UserSummary>,
    pub failures: Vec<Failure>,
    pub pairings: Vec<PairingRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestReport {
    pub settings: BacktestSettings,
    pub records: Vec<WindowRecord>,
    pub users: Vec<UserSummary>,
    pub summary: Vec<MethodSummary>,
    pub failures: Vec<Failure>,
    pub pairings: Vec<PairingRecord>,
    /// Wall-clock; excluded from the deterministic report files.
    pub timings: Vec<MethodTiming>,
}

impl BacktestReport {
    pub fn assemble(
        settings: BacktestSettings,
        records: Vec<WindowRecord>,
        failures: Vec<Failure>,
        pairings: Vec<PairingRecord>,
        timings: Vec<MethodTiming>,
    ) -> Result<Self> {
        let users = summarize_users(&records)?;
        let summary = summarize_methods(&settings, &users, &failures)?;
        Ok(Self {
            settings,
            records,
            users,
            summary,
            failures,
            pairings,
            timings,
        })
    }

    pub fn method_summary(&self, method: Method, window: usize) -> Option<&MethodSummary> {
        self.summary
            .iter()
            .find(|s| s.method == method && s.window == window)
    }

    pub fn records_for<'a>(
        &'a self,
        user: &'a str,
        method: Method,
        window: usize,
    ) -> impl Iterator<Item = &'a WindowRecord> + 'a {
        self.records
            .iter()
            .filter(move |r| r.user == user && r.method == method && r.window == window)
    }

    pub fn summary_doc(&self) -> ReportSummary {
        ReportSummary {
            settings: self.settings.clone(),
            summary: self.summary.clone(),
            users: self.users.clone(),
            failures: self.failures.clone(),
            pairings: self.pairings.clone(),
        }
    }
}

/// Per-user medians, in order of first appearance of each
/// (user, method, window) group.
pub fn summarize_users(records: &[WindowRecord]) -> Result<Vec<UserSummary>> {
    let mut order: Vec<(&str, Method, usize)> = Vec::new();
    let mut groups: BTreeMap<(&str, Method, usize), Vec<&WindowRecord>> = BTreeMap::new();
    for r in records {
        let key = (r.user.as_str(), r.method, r.window);
        groups
            .entry(key)
            .or_insert_with(|| {
                order.push(key);
                Vec::new()
            })
            .push(r);
    }
    order
        .into_iter()
        .map(|key| {
            let rs = &groups[&key];
            let ape: Vec<f64> = rs.iter().filter_map(|r| r.pct_err).collect();
            let abs: Vec<f64> = rs.iter().map(|r| r.abs_err).collect();
            let sq: Vec<f64> = rs.iter().map(|r| r.sq_err).collect();
            let nrmsd: Vec<f64> = rs.iter().filter_map(|r| r.nrmsd()).collect();
            Ok(UserSummary {
                user: key.0.to_string(),
                method: key.1,
                window: key.2,
                windows: rs.len(),
                median_ape: optional_median(&ape)?,
                ape_skipped: rs.len() - ape.len(),
                median_abs_err: median(&abs)?,
                median_sq_err: median(&sq)?,
                median_nrmsd: optional_median(&nrmsd)?,
            })
        })
        .collect()
}

fn optional_median(values: &[f64]) -> Result<Option<f64>> {
    if values.is_empty() {
        Ok(None)
    } else {
        median(values).map(Some)
    }
}

fn optional_mean_sd(values: &[f64]) -> Result<(Option<f64>, Option<f64>)> {
    if values.is_empty() {
        return Ok((None, None));
    }
    let (m, s) = mean_sd(values)?;
    Ok((Some(m), Some(s)))
}

/// One row per configured (window size, method), averaging the per-user
/// medians.
pub fn summarize_methods(
    settings: &BacktestSettings,
    users: &[UserSummary],
    failures: &[Failure],
) -> Result<Vec<MethodSummary>> {
    let mut out = Vec::new();
    for &window in &settings.window_sizes {
        for &method in &settings.methods {
            let rows: Vec<&UserSummary> = users
                .iter()
                .filter(|u| u.method == method && u.window == window)
                .collect();
            let collect = |f: &dyn Fn(&UserSummary) -> Option<f64>| -> Vec<f64> {
                rows.iter().filter_map(|u| f(u)).collect()
            };
            let (mean_mape, sd_mape) = optional_mean_sd(&collect(&|u| u.median_ape))?;
            let (mean_mae, _) = optional_mean_sd(&collect(&|u| Some(u.median_abs_err)))?;
            let (mean_mse, _) = optional_mean_sd(&collect(&|u| Some(u.median_sq_err)))?;
            let (mean_nrmsd, _) = optional_mean_sd(&collect(&|u| u.median_nrmsd))?;
            out.push(MethodSummary {
                method,
                window,
                users: rows.len(),
                failed_users: failures
                    .iter()
                    .filter(|f| f.method == method && f.window == window)
                    .count(),
                mean_mape,
                sd_mape,
                mean_mae,
                mean_mse,
                mean_nrmsd,
            });
        }
    }
    Ok(out)
}

pub const RECORDS_FILE: &str = "backtest.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const PAIRINGS_FILE: &str = "pairings.csv";
pub const TIMINGS_FILE: &str = "timings.json";

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

/// Writes the records CSV, summary JSON, pairing CSV and timings JSON into
/// `dir`.
pub fn write_report(report: &BacktestReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_csv(&dir.join(RECORDS_FILE), &report.records)?;
    write_json(&dir.join(SUMMARY_FILE), &report.summary_doc())?;
    write_csv(&dir.join(PAIRINGS_FILE), &report.pairings)?;
    write_json(&dir.join(TIMINGS_FILE), &report.timings)?;
    Ok(())
}

/// Reads a report back from `dir`, recomputing the aggregates from the raw
/// records. Timings are optional.
pub fn read_report(dir: &Path) -> Result<BacktestReport> {
    let records: Vec<WindowRecord> = read_csv(&dir.join(RECORDS_FILE))?;
    let doc: ReportSummary = read_json(&dir.join(SUMMARY_FILE))?;
    let timings_path = dir.join(TIMINGS_FILE);
    let timings = if timings_path.exists() {
        read_json(&timings_path)?
    } else {
        Vec::new()
    };
    BacktestReport::assemble(doc.settings, records, doc.failures, doc.pairings, timings)
}
