//! Run configuration: a flat `key = value` file whose entries can be
//! overridden from the command line.

use std::path::{Path, PathBuf};

use sparseload::eval::{BacktestOptions, Method};
use sparseload::significance::PairTestOptions;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset_dir: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub window_sizes: Vec<usize>,
    pub max_lag: usize,
    pub cv_folds: usize,
    pub alpha: f64,
    pub methods: Vec<Method>,
    pub seed: u64,
    pub detrend: bool,
    pub weekday_only: bool,
    pub max_test_points: Option<usize>,
    pub threads: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let bt = BacktestOptions::default();
        Self {
            dataset_dir: None,
            output_dir: None,
            window_sizes: bt.window_sizes,
            max_lag: bt.max_lag,
            cv_folds: bt.cv_folds,
            alpha: 0.05,
            methods: bt.methods,
            seed: 0,
            detrend: true,
            weekday_only: false,
            max_test_points: None,
            threads: None,
        }
    }
}

fn bad(key: &str, value: &str) -> CliError {
    CliError::Config(format!("cannot parse {key} = {value:?}"))
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> CliResult<T> {
    value.parse().map_err(|_| bad(key, value))
}

fn parse_bool(key: &str, value: &str) -> CliResult<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(bad(key, value)),
    }
}

fn parse_optional(key: &str, value: &str) -> CliResult<Option<usize>> {
    if value == "none" || value.is_empty() {
        Ok(None)
    } else {
        parse_num(key, value).map(Some)
    }
}

pub fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> CliResult<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| bad(key, s)))
        .collect()
}

impl RunConfig {
    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> CliResult<()> {
        let value = value.trim();
        match key {
            "dataset_dir" => self.dataset_dir = (!value.is_empty()).then(|| PathBuf::from(value)),
            "output_dir" => self.output_dir = (!value.is_empty()).then(|| PathBuf::from(value)),
            "window_sizes" => self.window_sizes = parse_list(key, value)?,
            "max_lag" => self.max_lag = parse_num(key, value)?,
            "cv_folds" => self.cv_folds = parse_num(key, value)?,
            "alpha" => self.alpha = parse_num(key, value)?,
            "methods" => self.methods = parse_list(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "detrend" => self.detrend = parse_bool(key, value)?,
            "weekday_only" => self.weekday_only = parse_bool(key, value)?,
            "max_test_points" => self.max_test_points = parse_optional(key, value)?,
            "threads" => self.threads = parse_optional(key, value)?,
            _ => return Err(CliError::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Parses config text. Blank lines and lines starting with `#` are
    /// ignored; later entries replace earlier ones.
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut cfg = RunConfig::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected key = value", i + 1)))?;
            cfg.set(key.trim(), value)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        let join = |v: Vec<String>| v.join(",");
        let opt = |v: Option<usize>| v.map_or("none".to_string(), |n| n.to_string());
        let path = |p: &Option<PathBuf>| p.as_ref().map_or(String::new(), |p| p.display().to_string());
        let mut out = String::new();
        for (k, v) in [
            ("dataset_dir", path(&self.dataset_dir)),
            ("output_dir", path(&self.output_dir)),
            ("window_sizes", join(self.window_sizes.iter().map(|w| w.to_string()).collect())),
            ("max_lag", self.max_lag.to_string()),
            ("cv_folds", self.cv_folds.to_string()),
            ("alpha", self.alpha.to_string()),
            ("methods", join(self.methods.iter().map(|m| m.name().to_string()).collect())),
            ("seed", self.seed.to_string()),
            ("detrend", self.detrend.to_string()),
            ("weekday_only", self.weekday_only.to_string()),
            ("max_test_points", opt(self.max_test_points)),
            ("threads", opt(self.threads)),
        ] {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.cv_folds != 5 && self.cv_folds != 10 {
            return Err(CliError::Config(format!("cv_folds must be 5 or 10, got {}", self.cv_folds)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(CliError::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        self.backtest_options().validate()?;
        Ok(())
    }

    pub fn dataset_dir(&self) -> CliResult<&Path> {
        self.dataset_dir
            .as_deref()
            .ok_or_else(|| CliError::Config("dataset_dir is not set".into()))
    }

    pub fn output_dir(&self) -> CliResult<&Path> {
        self.output_dir
            .as_deref()
            .ok_or_else(|| CliError::Config("output_dir is not set".into()))
    }

    pub fn backtest_options(&self) -> BacktestOptions {
        BacktestOptions {
            methods: self.methods.clone(),
            window_sizes: self.window_sizes.clone(),
            max_lag: self.max_lag,
            cv_folds: self.cv_folds,
            detrend: self.detrend,
            weekday_only: self.weekday_only,
            pair: PairTestOptions {
                alpha: self.alpha,
                ..Default::default()
            },
            max_test_points: self.max_test_points,
            threads: self.threads,
            seed: self.seed,
            ..Default::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_round_trips() {
        let cfg = RunConfig::parse(
            "# comment\ndataset_dir = data\n\nwindow_sizes = 720, 960\nmethods = averaging,lasso+pair\nalpha=0.1\nthreads = 2\n",
        )
        .unwrap();
        assert_eq!(cfg.window_sizes, vec![720, 960]);
        assert_eq!(cfg.methods, vec![Method::Averaging, Method::LassoPair]);
        assert_eq!(cfg.alpha, 0.1);
        assert_eq!(cfg.threads, Some(2));
        assert_eq!(cfg.dataset_dir, Some(PathBuf::from("data")));
        assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn rejects_bad_entries() {
        assert!(RunConfig::parse("colour = blue").is_err());
        assert!(RunConfig::parse("max_lag").is_err());
        assert!(RunConfig::parse("methods = arima").is_err());
        let mut cfg = RunConfig::default();
        cfg.cv_folds = 7;
        assert!(cfg.validate().is_err());
        cfg.cv_folds = 5;
        cfg.alpha = 1.0;
        assert!(cfg.validate().is_err());
        cfg.alpha = 0.05;
        cfg.validate().unwrap();
    }
}
