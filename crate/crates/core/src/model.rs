//! A fitted LASSO forecaster for one meter, stored as a self-contained JSON
//! document.

use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::design::{build_lag_matrix, standardize_columns, ColumnLabel};
use crate::error::{Error, Result};
use crate::series::{daily_profile, format_timestamp, ConsumptionSeries, DailyProfile};
use crate::solver::{fit_lasso_cv, CdOptions, GridOptions, LinearModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelTerm {
    pub label: ColumnLabel,
    /// Coefficient on the unit-norm column.
    pub coefficient: f64,
    /// Norm of the raw column in the training window.
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastModel {
    pub meter_id: String,
    pub lambda: f64,
    pub intercept: f64,
    pub terms: Vec<ModelTerm>,
    pub max_lag: usize,
    pub cv_folds: usize,
    /// Training positions `[start, end)` within the meter's series.
    pub window_start: usize,
    pub window_end: usize,
    pub window_start_time: String,
    pub window_end_time: String,
    /// `None` when the model was fitted on raw values.
    pub daily_profile: Option<DailyProfile>,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct ModelOptions {
    pub max_lag: usize,
    pub cv_folds: usize,
    pub detrend: bool,
    pub grid: GridOptions,
    pub cd: CdOptions,
}

impl Default for ModelOptions {
    fn default() -> Self {
        Self {
            max_lag: 240,
            cv_folds: 10,
            detrend: true,
            grid: GridOptions::default(),
            cd: CdOptions::default(),
        }
    }
}

/// Fits the cross-validated LASSO on `window` of the series.
pub fn fit_forecast_model(
    series: &ConsumptionSeries,
    window: Range<usize>,
    opts: &ModelOptions,
) -> Result<ForecastModel> {
    if window.end > series.len() || window.is_empty() {
        return Err(Error::RangeTooShort {
            len: window.len().min(series.len()),
            need: window.end,
        });
    }
    let profile = if opts.detrend {
        Some(daily_profile(series, window.clone())?)
    } else {
        None
    };
    let values = detrended(series, profile.as_ref(), window.end);
    let problem = standardize_columns(&build_lag_matrix(&values, opts.max_lag, window.clone())?)?;
    let (fit, _) = fit_lasso_cv(&problem, opts.cv_folds, &opts.grid, &opts.cd)?;
    let terms = fit
        .active_set
        .iter()
        .map(|&j| ModelTerm {
            label: fit.column_labels[j].clone(),
            coefficient: fit.coefficients[j],
            scale: fit.column_scales[j],
        })
        .collect();
    Ok(ForecastModel {
        meter_id: series.meter_id.clone(),
        lambda: fit.lambda,
        intercept: fit.intercept,
        terms,
        max_lag: opts.max_lag,
        cv_folds: opts.cv_folds,
        window_start_time: format_timestamp(series.start + window.start as i64),
        window_end_time: format_timestamp(series.start + window.end as i64),
        window_start: window.start,
        window_end: window.end,
        daily_profile: profile,
        converged: fit.converged,
    })
}

fn detrended(series: &ConsumptionSeries, profile: Option<&DailyProfile>, end: usize) -> Vec<f64> {
    match profile {
        Some(p) => (0..end).map(|i| series.values[i] - p.at(i)).collect(),
        None => series.values[..end].to_vec(),
    }
}

impl ForecastModel {
    pub fn linear_model(&self) -> LinearModel {
        LinearModel {
            intercept: self.intercept,
            coefficients: self.terms.iter().map(|t| t.coefficient).collect(),
            column_labels: self.terms.iter().map(|t| t.label.clone()).collect(),
            column_scales: self.terms.iter().map(|t| t.scale).collect(),
        }
    }

    /// One-step forecast of position `t` on the original scale, using
    /// values before `t`.
    pub fn predict_at(&self, series: &ConsumptionSeries, t: usize) -> Result<f64> {
        if t > series.len() {
            return Err(Error::InsufficientHistory { need: t, have: series.len() });
        }
        let values = detrended(series, self.daily_profile.as_ref(), t);
        let yhat = self.linear_model().predict_at(values.as_slice(), t)?;
        Ok(yhat + self.daily_profile.as_ref().map_or(0.0, |p| p.at(t)))
    }

    /// Forecast of the hour right after the training window.
    pub fn predict_next(&self, series: &ConsumptionSeries) -> Result<f64> {
        self.predict_at(series, self.window_end)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}
