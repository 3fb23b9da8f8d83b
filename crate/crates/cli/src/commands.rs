use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};
use sparseload::eval::report::{read_report, write_csv, write_report, PairingRecord};
use sparseload::eval::{pair_test_window, run_backtest, BacktestOptions, BacktestReport, Method};
use sparseload::model::{fit_forecast_model, ForecastModel, ModelOptions};
use sparseload::series::{parse_timestamp, ConsumptionSeries, HourIndex, HOURS_PER_DAY};
use sparseload::significance::PairTestOptions;
use sparseload::synth::{
    generate_coupled_panel, generate_null_panel, generate_sparse_ar, CoupledPanelSpec, SparseArSpec,
};

use crate::config::RunConfig;
use crate::dataset::{self, meter_file_name, IngestSummary};
use crate::error::{CliError, CliResult};

pub const CONFIG_FILE: &str = "config.txt";
pub const MODELS_DIR: &str = "models";

pub fn cmd_ingest(input: &Path, dataset_dir: &Path, max_gap_fill: usize) -> CliResult<IngestSummary> {
    let summary = dataset::ingest(input, dataset_dir, max_gap_fill)?;
    info!(
        "ingested {} meters ({} hours, {} filled), skipped {}",
        summary.meters,
        summary.hours,
        summary.gaps_filled,
        summary.skipped.len()
    );
    Ok(summary)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SynthKind {
    /// Independent meters following the demo sparse lag pattern.
    SparseAr,
    /// Independent white noise.
    Null,
    /// Leader/follower pairs where followers load on their leader's
    /// previous hour.
    Coupled,
}

#[derive(Debug, Clone)]
pub struct SynthOptions {
    pub kind: SynthKind,
    pub users: usize,
    pub length: usize,
    pub seed: u64,
    pub start: HourIndex,
    /// Constant added to every value.
    pub level: f64,
    /// Amplitude of a sinusoidal daily cycle.
    pub daily_amplitude: f64,
    pub noise_sd: f64,
    pub coupling: f64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            kind: SynthKind::SparseAr,
            users: 10,
            length: 2000,
            seed: 0,
            start: parse_timestamp("2024-01-01T00:00:00Z").expect("valid timestamp"),
            level: 2.0,
            daily_amplitude: 0.5,
            noise_sd: 0.3,
            coupling: 0.5,
        }
    }
}

fn daily_cycle(opts: &SynthOptions) -> Vec<f64> {
    (0..HOURS_PER_DAY)
        .map(|h| opts.level + opts.daily_amplitude * (h as f64 / HOURS_PER_DAY as f64 * std::f64::consts::TAU).sin())
        .collect()
}

pub fn synth_panel(opts: &SynthOptions) -> CliResult<Vec<ConsumptionSeries>> {
    let mut base = SparseArSpec::demo(opts.length, opts.seed);
    base.noise_sd = opts.noise_sd;
    base.start = opts.start;
    base.daily_profile = Some(daily_cycle(opts));
    let panel = match opts.kind {
        SynthKind::SparseAr => (0..opts.users)
            .map(|u| {
                let spec = SparseArSpec {
                    seed: opts.seed.wrapping_add(u as u64),
                    ..base.clone()
                };
                generate_sparse_ar(&spec, &format!("u{u:03}"))
            })
            .collect::<sparseload::Result<Vec<_>>>()?,
        SynthKind::Null => {
            let profile = daily_cycle(opts);
            generate_null_panel(opts.users, opts.length, opts.noise_sd, opts.seed)?
                .into_iter()
                .map(|mut s| {
                    s.start = opts.start;
                    for i in 0..s.len() {
                        s.values[i] += profile[s.hour_of_day(i)];
                    }
                    s
                })
                .collect()
        }
        SynthKind::Coupled => generate_coupled_panel(&CoupledPanelSpec {
            num_users: opts.users,
            base,
            coupling: opts.coupling,
        })?,
    };
    for s in &panel {
        if let Some(v) = s.values.iter().find(|v| **v < 0.0) {
            return Err(CliError::Config(format!(
                "meter {} has negative value {v}; raise the level",
                s.meter_id
            )));
        }
    }
    Ok(panel)
}

pub fn cmd_synth(opts: &SynthOptions, output: &Path) -> CliResult<usize> {
    let panel = synth_panel(opts)?;
    dataset::write_input_csv(output, &panel)?;
    Ok(panel.len())
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub window: usize,
    pub max_lag: usize,
    pub cv_folds: usize,
    pub detrend: bool,
    pub weekday_only: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            window: 720,
            max_lag: 240,
            cv_folds: 10,
            detrend: true,
            weekday_only: false,
        }
    }
}

fn calendar_view(series: ConsumptionSeries, weekday_only: bool) -> ConsumptionSeries {
    if weekday_only {
        series.weekdays_only()
    } else {
        series
    }
}

fn last_window(series: &ConsumptionSeries, window: usize) -> CliResult<std::ops::Range<usize>> {
    if series.len() < window {
        return Err(CliError::Core(sparseload::Error::InsufficientHistory {
            need: window,
            have: series.len(),
        }));
    }
    Ok(series.len() - window..series.len())
}

fn find_meter(panel: &[ConsumptionSeries], meter: &str) -> CliResult<usize> {
    panel
        .iter()
        .position(|s| s.meter_id == meter)
        .ok_or_else(|| CliError::NotFound(format!("meter {meter:?} is not in the dataset")))
}

fn model_options(fit: &FitOptions) -> ModelOptions {
    ModelOptions {
        max_lag: fit.max_lag,
        cv_folds: fit.cv_folds,
        detrend: fit.detrend,
        ..Default::default()
    }
}

/// Fits the LASSO forecaster on the most recent `window` hours of a meter.
pub fn cmd_fit(dataset_dir: &Path, meter: &str, opts: &FitOptions) -> CliResult<ForecastModel> {
    let panel = dataset::load_dataset(dataset_dir)?;
    let idx = find_meter(&panel, meter)?;
    let series = calendar_view(panel[idx].clone(), opts.weekday_only);
    let range = last_window(&series, opts.window)?;
    Ok(fit_forecast_model(&series, range, &model_options(opts))?)
}

/// Runs the pairing test on the most recent `window` hours of each target
/// (all meters when `target` is `None`).
pub fn cmd_pairtest(
    dataset_dir: &Path,
    target: Option<&str>,
    opts: &FitOptions,
    alpha: f64,
) -> CliResult<Vec<PairingRecord>> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(CliError::Config(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let panel: Vec<ConsumptionSeries> = dataset::load_dataset(dataset_dir)?
        .into_iter()
        .map(|s| calendar_view(s, opts.weekday_only))
        .collect();
    let targets = match target {
        Some(m) => vec![find_meter(&panel, m)?],
        None => (0..panel.len()).collect(),
    };
    let bt = BacktestOptions {
        max_lag: opts.max_lag,
        cv_folds: opts.cv_folds,
        detrend: opts.detrend,
        pair: PairTestOptions {
            alpha,
            ..Default::default()
        },
        ..Default::default()
    };
    let mut out = Vec::new();
    for t in targets {
        let range = last_window(&panel[t], opts.window)?;
        if let Some(rec) = pair_test_window(&panel, t, range, &bt)? {
            out.push(rec);
        }
    }
    Ok(out)
}

fn validated(cfg: &RunConfig) -> CliResult<(Vec<ConsumptionSeries>, BacktestOptions, PathBuf)> {
    cfg.validate()?;
    let panel = dataset::load_dataset(cfg.dataset_dir()?)?;
    Ok((panel, cfg.backtest_options(), cfg.output_dir()?.to_path_buf()))
}

/// Backtest only: writes the report files under the output directory.
pub fn cmd_backtest(cfg: &RunConfig) -> CliResult<BacktestReport> {
    let (panel, opts, out) = validated(cfg)?;
    let report = run_backtest(&panel, &opts)?;
    write_report(&report, &out)?;
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: BacktestReport,
    pub models: Vec<PathBuf>,
}

/// Full experiment: backtest, report files, the resolved configuration and
/// one model document per meter and window size fitted on the most recent
/// hours of the meter.
pub fn cmd_run(cfg: &RunConfig) -> CliResult<RunOutcome> {
    let (panel, opts, out) = validated(cfg)?;
    let report = run_backtest(&panel, &opts)?;
    write_report(&report, &out)?;
    std::fs::write(out.join(CONFIG_FILE), cfg.to_text())?;

    let mut models = Vec::new();
    if cfg.methods.iter().any(|m| matches!(m, Method::Lasso | Method::LassoPair)) {
        let dir = out.join(MODELS_DIR);
        std::fs::create_dir_all(&dir)?;
        for s in &panel {
            let series = calendar_view(s.clone(), cfg.weekday_only);
            for &w in &cfg.window_sizes {
                let fit = FitOptions {
                    window: w,
                    max_lag: cfg.max_lag,
                    cv_folds: cfg.cv_folds,
                    detrend: cfg.detrend,
                    weekday_only: cfg.weekday_only,
                };
                let Ok(range) = last_window(&series, w) else {
                    continue;
                };
                match fit_forecast_model(&series, range, &model_options(&fit)) {
                    Ok(model) => {
                        let stem = meter_file_name(&s.meter_id);
                        let path = dir.join(format!("{}_W{w}.json", stem.trim_end_matches(".csv")));
                        model.write(&path)?;
                        models.push(path);
                    }
                    Err(e) => log::warn!("no model for {} at W={w}: {e}", s.meter_id),
                }
            }
        }
    }
    Ok(RunOutcome { report, models })
}

/// Method-by-window table of mean (sd) per-user median APE.
pub fn cmd_report(report_dir: &Path) -> CliResult<String> {
    let report = read_report(report_dir)?;
    Ok(format_table(&report))
}

pub fn format_table(report: &BacktestReport) -> String {
    let windows = &report.settings.window_sizes;
    let mut out = format!("{:<12}", "method");
    for w in windows {
        let _ = write!(out, "{:>22}", format!("W={w}"));
    }
    out.push('\n');
    for &m in &report.settings.methods {
        let _ = write!(out, "{:<12}", m.name());
        for &w in windows {
            let cell = match report.method_summary(m, w) {
                Some(s) => match (s.mean_mape, s.sd_mape) {
                    (Some(mean), Some(sd)) => format!("{mean:.4} ({sd:.4})"),
                    _ => "-".to_string(),
                },
                None => "-".to_string(),
            };
            let _ = write!(out, "{cell:>22}");
        }
        out.push('\n');
    }
    if !report.failures.is_empty() {
        let _ = writeln!(out, "{} failed user/method/window combinations", report.failures.len());
    }
    out
}

pub fn write_pairings(path: &Path, rows: &[PairingRecord]) -> CliResult<()> {
    write_csv(path, rows)?;
    Ok(())
}
