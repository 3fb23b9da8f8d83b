use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sparseload::eval::Method;
use sparseload::series::parse_timestamp;
use sparseload_cli::commands::{format_table, write_pairings};
use sparseload_cli::config::parse_list;
use sparseload_cli::{
    cmd_backtest, cmd_fit, cmd_ingest, cmd_pairtest, cmd_report, cmd_run, cmd_synth, CliError, CliResult,
    FitOptions, RunConfig, SynthKind, SynthOptions,
};

#[derive(Parser)]
#[command(name = "sparseload", version, about = "Sparse autoregressive load forecasting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Import a meter_id,timestamp,kwh CSV into a dataset directory.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = 3)]
        max_gap_fill: usize,
    },
    /// Write a synthetic panel in the ingestion format.
    Synth(SynthArgs),
    /// Fit the LASSO forecaster on a meter's most recent hours.
    Fit {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        meter: String,
        #[command(flatten)]
        fit: FitArgs,
        /// Model JSON path; printed to stdout when omitted.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Test whether another meter's previous hour improves a meter's model.
    Pairtest {
        #[arg(long)]
        dataset: PathBuf,
        /// Test every meter when omitted.
        #[arg(long)]
        target: Option<String>,
        #[command(flatten)]
        fit: FitArgs,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Pairing CSV path; printed to stdout when omitted.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Sliding-window backtest; writes the report files.
    Backtest(RunArgs),
    /// Print the method summary table of a report directory.
    Report {
        #[arg(long)]
        input: PathBuf,
        /// Print summary.json instead of the table.
        #[arg(long)]
        json: bool,
    },
    /// Backtest plus per-meter model documents and the resolved config.
    Run(RunArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    SparseAr,
    Null,
    Coupled,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_enum, default_value = "sparse-ar")]
    kind: KindArg,
    #[arg(long, default_value_t = 10)]
    users: usize,
    #[arg(long, default_value_t = 2000)]
    length: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "2024-01-01T00:00:00Z")]
    start: String,
    #[arg(long, default_value_t = 2.0)]
    level: f64,
    #[arg(long, default_value_t = 0.5)]
    daily_amplitude: f64,
    #[arg(long, default_value_t = 0.3)]
    noise_sd: f64,
    #[arg(long, default_value_t = 0.5)]
    coupling: f64,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long, default_value_t = 720)]
    window: usize,
    #[arg(long, default_value_t = 240)]
    max_lag: usize,
    #[arg(long, default_value_t = 10)]
    cv_folds: usize,
    #[arg(long)]
    no_detrend: bool,
    #[arg(long)]
    weekday_only: bool,
}

impl FitArgs {
    fn options(&self) -> FitOptions {
        FitOptions {
            window: self.window,
            max_lag: self.max_lag,
            cv_folds: self.cv_folds,
            detrend: !self.no_detrend,
            weekday_only: self.weekday_only,
        }
    }
}

/// Flags mirror the config keys and win over the config file.
#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Comma-separated, e.g. 720,960,1200.
    #[arg(long)]
    window_sizes: Option<String>,
    #[arg(long)]
    max_lag: Option<usize>,
    #[arg(long)]
    cv_folds: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Comma-separated subset of averaging,lw,ar1,es,lasso,lasso+pair.
    #[arg(long)]
    methods: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    detrend: Option<bool>,
    #[arg(long)]
    weekday_only: Option<bool>,
    #[arg(long)]
    max_test_points: Option<usize>,
    #[arg(long)]
    threads: Option<usize>,
}

impl RunArgs {
    fn resolve(&self) -> CliResult<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(v) = &self.dataset {
            cfg.dataset_dir = Some(v.clone());
        }
        if let Some(v) = &self.output {
            cfg.output_dir = Some(v.clone());
        }
        if let Some(v) = &self.window_sizes {
            cfg.window_sizes = parse_list("window_sizes", v)?;
        }
        if let Some(v) = &self.methods {
            cfg.methods = parse_list::<Method>("methods", v)?;
        }
        cfg.max_lag = self.max_lag.unwrap_or(cfg.max_lag);
        cfg.cv_folds = self.cv_folds.unwrap_or(cfg.cv_folds);
        cfg.alpha = self.alpha.unwrap_or(cfg.alpha);
        cfg.seed = self.seed.unwrap_or(cfg.seed);
        cfg.detrend = self.detrend.unwrap_or(cfg.detrend);
        cfg.weekday_only = self.weekday_only.unwrap_or(cfg.weekday_only);
        cfg.max_test_points = self.max_test_points.or(cfg.max_test_points);
        cfg.threads = self.threads.or(cfg.threads);
        Ok(cfg)
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> CliResult<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn execute(command: Command, error_dir: &mut Option<PathBuf>) -> CliResult<()> {
    match command {
        Command::Ingest {
            input,
            dataset,
            max_gap_fill,
        } => print_json(&cmd_ingest(&input, &dataset, max_gap_fill)?),
        Command::Synth(a) => {
            let opts = SynthOptions {
                kind: match a.kind {
                    KindArg::SparseAr => SynthKind::SparseAr,
                    KindArg::Null => SynthKind::Null,
                    KindArg::Coupled => SynthKind::Coupled,
                },
                users: a.users,
                length: a.length,
                seed: a.seed,
                start: parse_timestamp(&a.start)?,
                level: a.level,
                daily_amplitude: a.daily_amplitude,
                noise_sd: a.noise_sd,
                coupling: a.coupling,
            };
            let n = cmd_synth(&opts, &a.output)?;
            eprintln!("wrote {n} meters to {}", a.output.display());
            Ok(())
        }
        Command::Fit {
            dataset,
            meter,
            fit,
            output,
        } => {
            let model = cmd_fit(&dataset, &meter, &fit.options())?;
            match output {
                Some(p) => Ok(model.write(&p)?),
                None => print_json(&model),
            }
        }
        Command::Pairtest {
            dataset,
            target,
            fit,
            alpha,
            output,
        } => {
            let rows = cmd_pairtest(&dataset, target.as_deref(), &fit.options(), alpha)?;
            match output {
                Some(p) => write_pairings(&p, &rows),
                None => {
                    let mut w = csv::Writer::from_writer(std::io::stdout());
                    for r in &rows {
                        w.serialize(r)?;
                    }
                    w.flush()?;
                    Ok(())
                }
            }
        }
        Command::Backtest(a) => {
            let cfg = a.resolve()?;
            *error_dir = cfg.output_dir.clone();
            let report = cmd_backtest(&cfg)?;
            print!("{}", format_table(&report));
            Ok(())
        }
        Command::Report { input, json } => {
            if json {
                let report = sparseload::eval::report::read_report(&input)?;
                print_json(&report.summary_doc())
            } else {
                print!("{}", cmd_report(&input)?);
                Ok(())
            }
        }
        Command::Run(a) => {
            let cfg = a.resolve()?;
            *error_dir = cfg.output_dir.clone();
            let outcome = cmd_run(&cfg)?;
            print!("{}", format_table(&outcome.report));
            eprintln!("wrote {} model documents", outcome.models.len());
            Ok(())
        }
    }
}

fn report_error(err: &CliError, dir: Option<&Path>) {
    let text = serde_json::to_string_pretty(&err.report()).unwrap_or_else(|_| err.to_string());
    eprintln!("{text}");
    if let Some(dir) = dir {
        if std::fs::create_dir_all(dir).is_ok() {
            let _ = std::fs::write(dir.join("error.json"), format!("{text}\n"));
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let mut error_dir = None;
    match execute(cli.command, &mut error_dir) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report_error(&e, error_dir.as_deref());
            ExitCode::FAILURE
        }
    }
}
