use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::design::{ColumnLabel, RegressionProblem};
use crate::error::{Error, Result};

use super::LinearPredictor;

/// Relative size of a QR pivot below which a column is treated as a linear
/// combination of the others.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    /// One coefficient per design column, intercept first when present.
    pub coefficients: Vec<f64>,
    pub column_labels: Vec<ColumnLabel>,
    pub column_scales: Vec<f64>,
    pub has_intercept: bool,
    pub residual_sum_squares: f64,
    pub dof: usize,
    pub standard_errors: Vec<f64>,
}

impl OlsFit {
    pub fn residual_variance(&self) -> Option<f64> {
        (self.dof > 0).then(|| self.residual_sum_squares / self.dof as f64)
    }
}

impl LinearPredictor for OlsFit {
    fn intercept(&self) -> f64 {
        if self.has_intercept {
            self.coefficients[0]
        } else {
            0.0
        }
    }

    fn feature_coefficients(&self) -> &[f64] {
        &self.coefficients[usize::from(self.has_intercept)..]
    }
}

/// Least squares by Householder QR.
pub fn fit_ols(problem: &RegressionProblem) -> Result<OlsFit> {
    let (t, p) = problem.design.shape();
    if t < p {
        return Err(Error::Underdetermined { rows: t, cols: p });
    }
    let qr = problem.design.clone().qr();
    let r = qr.r();
    let max_diag = (0..p).fold(0.0f64, |m, i| m.max(r[(i, i)].abs()));
    if max_diag == 0.0 || (0..p).any(|i| r[(i, i)].abs() <= RANK_TOL * max_diag) {
        return Err(Error::RankDeficient);
    }
    let qty = qr.q().tr_mul(&problem.response);
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or(Error::RankDeficient)?;
    let residual = &problem.response - &problem.design * &beta;
    let rss = residual.norm_squared();
    let dof = t - p;

    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(p, p))
        .ok_or(Error::RankDeficient)?;
    let sigma2 = if dof > 0 { rss / dof as f64 } else { f64::NAN };
    let standard_errors = (0..p)
        .map(|i| (sigma2 * r_inv.row(i).norm_squared()).sqrt())
        .collect();

    Ok(OlsFit {
        coefficients: beta.iter().copied().collect(),
        column_labels: problem.column_labels.clone(),
        column_scales: problem.column_scales.clone(),
        has_intercept: problem.has_intercept,
        residual_sum_squares: rss,
        dof,
        standard_errors,
    })
}

/// Residual vector `y - X beta` of an OLS fit on its own problem.
pub fn ols_residuals(problem: &RegressionProblem, fit: &OlsFit) -> DVector<f64> {
    let beta = DVector::from_column_slice(&fit.coefficients);
    &problem.response - &problem.design * beta
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::build_lag_matrix;
    use approx::assert_relative_eq;

    #[test]
    fn exact_proportional_response() {
        let x = DMatrix::from_column_slice(4, 1, &[1.0, 2.0, 3.0, 4.0]);
        let y = DVector::from_vec(vec![2.0, 4.0, 6.0, 8.0]);
        let fit = fit_ols(&RegressionProblem::from_columns(y, x).unwrap()).unwrap();
        assert_relative_eq!(fit.coefficients[0], 2.0, epsilon = 1e-12);
        assert!(fit.residual_sum_squares < 1e-20);
        assert_eq!(fit.dof, 3);
    }

    #[test]
    fn orthogonal_response() {
        let x = DMatrix::from_column_slice(4, 2, &[1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0]);
        let y = DVector::from_vec(vec![1.0, -1.0, 2.0, -2.0]);
        let fit = fit_ols(&RegressionProblem::from_columns(y.clone(), x).unwrap()).unwrap();
        assert!(fit.coefficients.iter().all(|c| c.abs() < 1e-12));
        assert_relative_eq!(fit.residual_sum_squares, y.norm_squared(), epsilon = 1e-12);
    }

    #[test]
    fn noiseless_ar1_recovered() {
        // y_t = 0.5 y_{t-1} + 1 from y_0 = 10; direct substitution below
        // confirms the sequence before it is fitted.
        let mut y = vec![10.0];
        for t in 1..30 {
            y.push(0.5 * y[t - 1] + 1.0);
        }
        for t in 1..30 {
            assert_eq!(y[t], 0.5 * y[t - 1] + 1.0);
        }
        let fit = fit_ols(&build_lag_matrix(&y, 1, 0..y.len()).unwrap()).unwrap();
        assert_relative_eq!(fit.coefficients[0], 1.0, epsilon = 1e-8);
        assert_relative_eq!(fit.coefficients[1], 0.5, epsilon = 1e-8);
    }

    #[test]
    fn rank_and_shape_errors() {
        let x = DMatrix::from_column_slice(3, 2, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert_eq!(
            fit_ols(&RegressionProblem::from_columns(y.clone(), x).unwrap()).unwrap_err(),
            Error::RankDeficient
        );
        let wide = DMatrix::from_element(3, 4, 1.0);
        assert!(matches!(
            fit_ols(&RegressionProblem::from_columns(y, wide).unwrap()),
            Err(Error::Underdetermined { rows: 3, cols: 4 })
        ));
    }

    #[test]
    fn residual_orthogonal_to_columns() {
        let vals: Vec<f64> = (0..60).map(|i| ((i * 37 % 11) as f64).sin() + 2.0).collect();
        let p = build_lag_matrix(&vals, 4, 0..60).unwrap();
        let fit = fit_ols(&p).unwrap();
        let r = ols_residuals(&p, &fit);
        for j in 0..p.cols() {
            assert!(p.design.column(j).dot(&r).abs() < 1e-8);
        }
    }
}
