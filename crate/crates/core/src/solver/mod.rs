//! LASSO and least-squares estimation for autoregressive designs.

pub mod cd;
pub mod cv;
pub mod gram;
pub mod ols;
pub mod path;

use serde::{Deserialize, Serialize};

use crate::design::{features_at, ColumnLabel, LagSource};
use crate::error::{Error, Result};

pub use cd::{fit_lasso_cd, fit_lasso_path, kkt_violation, lasso_objective, CdOptions};
pub use cv::{cross_validate_lambda, fit_lasso_cv, lambda_grid, CvResult, GridOptions};
pub use gram::GramSystem;
pub use ols::{fit_ols, OlsFit};
pub use path::{lasso_path_prefix, LassoPathPrefix};

/// `sign(z) * max(|z| - gamma, 0)`.
pub fn soft_threshold(z: f64, gamma: f64) -> f64 {
    debug_assert!(gamma >= 0.0);
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

/// Sparse linear model fitted on standardized columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoFit {
    pub intercept: f64,
    /// Coefficients on the standardized scale, one per non-intercept column.
    pub coefficients: Vec<f64>,
    pub lambda: f64,
    pub active_set: Vec<usize>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub column_labels: Vec<ColumnLabel>,
    pub column_scales: Vec<f64>,
}

impl LassoFit {
    pub fn ensure_converged(&self) -> Result<&Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::MaxIterExceeded(self.iterations))
        }
    }

    pub fn active_labels(&self) -> Vec<ColumnLabel> {
        self.active_set
            .iter()
            .map(|&j| self.column_labels[j].clone())
            .collect()
    }

    /// Coefficient of raw (unstandardized) feature `j`.
    pub fn raw_coefficient(&self, j: usize) -> f64 {
        self.coefficients[j] / self.column_scales[j]
    }
}

/// Anything with an intercept and one coefficient per feature column.
pub trait LinearPredictor {
    fn intercept(&self) -> f64;
    fn feature_coefficients(&self) -> &[f64];
}

impl LinearPredictor for LassoFit {
    fn intercept(&self) -> f64 {
        self.intercept
    }

    fn feature_coefficients(&self) -> &[f64] {
        &self.coefficients
    }
}

/// `b0 + sum_j b_j * feature_j / scale_j` for raw feature values.
pub fn predict_linear<M: LinearPredictor + ?Sized>(
    model: &M,
    features: &[f64],
    column_scales: &[f64],
) -> Result<f64> {
    let coefs = model.feature_coefficients();
    if features.len() != coefs.len() {
        return Err(Error::DimensionMismatch {
            expected: coefs.len(),
            got: features.len(),
        });
    }
    if column_scales.len() != coefs.len() {
        return Err(Error::DimensionMismatch {
            expected: coefs.len(),
            got: column_scales.len(),
        });
    }
    Ok(model.intercept()
        + coefs
            .iter()
            .zip(features)
            .zip(column_scales)
            .map(|((b, x), s)| b * x / s)
            .sum::<f64>())
}

/// Fitted linear predictor addressed by column labels, so it can be
/// evaluated on any series that supplies the referenced lags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub column_labels: Vec<ColumnLabel>,
    pub column_scales: Vec<f64>,
}

impl LinearModel {
    /// Keeps only the nonzero coefficients of a LASSO fit.
    pub fn from_lasso(fit: &LassoFit) -> Self {
        Self {
            intercept: fit.intercept,
            coefficients: fit.active_set.iter().map(|&j| fit.coefficients[j]).collect(),
            column_labels: fit.active_labels(),
            column_scales: fit.active_set.iter().map(|&j| fit.column_scales[j]).collect(),
        }
    }

    pub fn from_ols(fit: &OlsFit) -> Self {
        let first = usize::from(fit.has_intercept);
        Self {
            intercept: LinearPredictor::intercept(fit),
            coefficients: fit.coefficients[first..].to_vec(),
            column_labels: fit.column_labels[first..].to_vec(),
            column_scales: fit.column_scales[first..].to_vec(),
        }
    }

    pub fn predict_at<S: LagSource + ?Sized>(&self, source: &S, t: usize) -> Result<f64> {
        let features = features_at(source, &self.column_labels, t)?;
        predict_linear(self, &features, &self.column_scales)
    }
}

impl LinearPredictor for LinearModel {
    fn intercept(&self) -> f64 {
        self.intercept
    }

    fn feature_coefficients(&self) -> &[f64] {
        &self.coefficients
    }
}
