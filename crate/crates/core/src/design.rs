//! Autoregressive design matrices.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// What a design column holds.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ColumnLabel {
    Intercept,
    /// `y_{t-order}` of the target (`meter == None`) or of another meter.
    Lag { order: usize, meter: Option<String> },
}

impl ColumnLabel {
    pub fn own_lag(order: usize) -> Self {
        ColumnLabel::Lag { order, meter: None }
    }

    pub fn cross_lag(meter: impl Into<String>, order: usize) -> Self {
        ColumnLabel::Lag {
            order,
            meter: Some(meter.into()),
        }
    }

    pub fn lag_order(&self) -> Option<usize> {
        match self {
            ColumnLabel::Intercept => None,
            ColumnLabel::Lag { order, .. } => Some(*order),
        }
    }
}

impl fmt::Display for ColumnLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ColumnLabel::Intercept => write!(f, "intercept"),
            ColumnLabel::Lag { order, meter: None } => write!(f, "lag{order}"),
            ColumnLabel::Lag {
                order,
                meter: Some(m),
            } => write!(f, "{m}:lag{order}"),
        }
    }
}

impl FromStr for ColumnLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "intercept" {
            return Ok(ColumnLabel::Intercept);
        }
        let (meter, lag) = match s.rsplit_once(':') {
            Some((m, l)) => (Some(m.to_string()), l),
            None => (None, s),
        };
        let order = lag
            .strip_prefix("lag")
            .and_then(|o| o.parse().ok())
            .ok_or_else(|| Error::Schema(format!("bad column label {s:?}")))?;
        Ok(ColumnLabel::Lag { order, meter })
    }
}

impl Serialize for ColumnLabel {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ColumnLabel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Response vector plus design matrix for one training window.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionProblem {
    pub response: DVector<f64>,
    pub design: DMatrix<f64>,
    pub column_labels: Vec<ColumnLabel>,
    /// Norm each column was divided by; 1.0 for unstandardized columns and
    /// the intercept.
    pub column_scales: Vec<f64>,
    /// When set, column 0 is the all-ones intercept column.
    pub has_intercept: bool,
    pub standardized: bool,
}

impl RegressionProblem {
    pub fn new(
        response: DVector<f64>,
        design: DMatrix<f64>,
        column_labels: Vec<ColumnLabel>,
        has_intercept: bool,
    ) -> Result<Self> {
        let (rows, cols) = design.shape();
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidConfig("design must be non-empty".into()));
        }
        if response.len() != rows {
            return Err(Error::DimensionMismatch {
                expected: rows,
                got: response.len(),
            });
        }
        if column_labels.len() != cols {
            return Err(Error::DimensionMismatch {
                expected: cols,
                got: column_labels.len(),
            });
        }
        if design.iter().chain(response.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("non-finite entry in regression problem".into()));
        }
        if has_intercept && column_labels[0] != ColumnLabel::Intercept {
            return Err(Error::InvalidConfig("intercept must be column 0".into()));
        }
        Ok(Self {
            response,
            design,
            column_scales: vec![1.0; cols],
            column_labels,
            has_intercept,
            standardized: false,
        })
    }

    /// Problem without intercept whose columns are taken as given.
    pub fn from_columns(response: DVector<f64>, design: DMatrix<f64>) -> Result<Self> {
        let labels = (1..=design.ncols()).map(ColumnLabel::own_lag).collect();
        Self::new(response, design, labels, false)
    }

    pub fn rows(&self) -> usize {
        self.design.nrows()
    }

    pub fn cols(&self) -> usize {
        self.design.ncols()
    }

    /// Index of the first penalized column.
    pub fn first_feature(&self) -> usize {
        usize::from(self.has_intercept)
    }

    pub fn num_features(&self) -> usize {
        self.cols() - self.first_feature()
    }

    pub fn feature_labels(&self) -> &[ColumnLabel] {
        &self.column_labels[self.first_feature()..]
    }

    pub fn feature_scales(&self) -> &[f64] {
        &self.column_scales[self.first_feature()..]
    }

    /// Restricts the problem to a subset of rows.
    pub fn select_rows(&self, rows: &[usize]) -> RegressionProblem {
        let mut out = self.clone();
        out.response = DVector::from_iterator(rows.len(), rows.iter().map(|&r| self.response[r]));
        out.design = self.design.select_rows(rows.iter());
        out
    }
}

/// Source of lagged values: the target series plus any other meters.
pub trait LagSource {
    fn values_for(&self, meter: Option<&str>) -> Option<&[f64]>;
}

impl LagSource for [f64] {
    fn values_for(&self, meter: Option<&str>) -> Option<&[f64]> {
        meter.is_none().then_some(self)
    }
}

/// Target values plus a list of other meters' values.
pub struct Panel<'a> {
    pub target: &'a [f64],
    pub others: Vec<(&'a str, &'a [f64])>,
}

impl LagSource for Panel<'_> {
    fn values_for(&self, meter: Option<&str>) -> Option<&[f64]> {
        match meter {
            None => Some(self.target),
            Some(m) => self.others.iter().find(|(id, _)| *id == m).map(|(_, v)| *v),
        }
    }
}

/// Feature vector (non-intercept columns) for predicting position `t`.
pub fn features_at<S: LagSource + ?Sized>(
    source: &S,
    labels: &[ColumnLabel],
    t: usize,
) -> Result<Vec<f64>> {
    labels
        .iter()
        .filter(|l| **l != ColumnLabel::Intercept)
        .map(|label| match label {
            ColumnLabel::Lag { order, meter } => {
                let values = source.values_for(meter.as_deref()).ok_or_else(|| {
                    Error::MisalignedSeries(format!("no values for column {label}"))
                })?;
                if *order > t || t - order >= values.len() {
                    return Err(Error::InsufficientHistory {
                        need: *order,
                        have: t,
                    });
                }
                Ok(values[t - order])
            }
            ColumnLabel::Intercept => unreachable!(),
        })
        .collect()
}

/// Builds rows `t` in `rows` with response `target[t]` and the requested
/// lagged columns, optionally preceded by an intercept column.
pub fn build_from_labels<S: LagSource + ?Sized>(
    source: &S,
    rows: Range<usize>,
    labels: &[ColumnLabel],
    intercept: bool,
) -> Result<RegressionProblem> {
    let target = source
        .values_for(None)
        .ok_or_else(|| Error::MisalignedSeries("no target values".into()))?;
    let mut all_labels = Vec::with_capacity(labels.len() + 1);
    if intercept {
        all_labels.push(ColumnLabel::Intercept);
    }
    all_labels.extend(labels.iter().filter(|l| **l != ColumnLabel::Intercept).cloned());
    let n = rows.len();
    let p = all_labels.len();
    let mut design = DMatrix::zeros(n, p);
    let mut response = DVector::zeros(n);
    for (r, t) in rows.clone().enumerate() {
        if t >= target.len() {
            return Err(Error::WindowTooShort {
                len: target.len(),
                max_lag: 0,
            });
        }
        response[r] = target[t];
        let feats = features_at(source, &all_labels, t)?;
        let offset = usize::from(intercept);
        if intercept {
            design[(r, 0)] = 1.0;
        }
        for (k, v) in feats.into_iter().enumerate() {
            design[(r, k + offset)] = v;
        }
    }
    RegressionProblem::new(response, design, all_labels, intercept)
}

/// Lag matrix `[1, y_{t-1}, ..., y_{t-I}]` for every `t` in `window` with a
/// full set of lags inside the window.
pub fn build_lag_matrix(
    values: &[f64],
    max_lag: usize,
    window: Range<usize>,
) -> Result<RegressionProblem> {
    if max_lag == 0 {
        return Err(Error::InvalidConfig("max_lag must be at least 1".into()));
    }
    if window.len() <= max_lag || window.end > values.len() {
        return Err(Error::WindowTooShort {
            len: window.len().min(values.len().saturating_sub(window.start)),
            max_lag,
        });
    }
    let labels: Vec<ColumnLabel> = (1..=max_lag).map(ColumnLabel::own_lag).collect();
    build_from_labels(values, window.start + max_lag..window.end, &labels, true)
}

/// Divides every non-intercept column by its Euclidean norm.
pub fn standardize_columns(problem: &RegressionProblem) -> Result<RegressionProblem> {
    let mut out = problem.clone();
    for j in problem.first_feature()..problem.cols() {
        let norm = out.design.column(j).norm();
        if norm == 0.0 {
            return Err(Error::ZeroColumn(j));
        }
        out.design.column_mut(j).unscale_mut(norm);
        out.column_scales[j] = problem.column_scales[j] * norm;
    }
    out.standardized = true;
    Ok(out)
}

/// Centers every column and then scales it to unit norm. Used for regressor
/// blocks that carry no intercept column.
pub fn center_and_normalize(design: &mut DMatrix<f64>) -> Result<Vec<f64>> {
    let n = design.nrows() as f64;
    let mut scales = Vec::with_capacity(design.ncols());
    for j in 0..design.ncols() {
        let mut col = design.column_mut(j);
        let mean = col.sum() / n;
        col.add_scalar_mut(-mean);
        let norm = col.norm();
        let max_abs = col.amax();
        if norm == 0.0 || max_abs <= 1e-12 * mean.abs().max(1e-300) {
            return Err(Error::ZeroColumn(j));
        }
        col.unscale_mut(norm);
        scales.push(norm);
    }
    Ok(scales)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn lag_matrix_hand_example() {
        let p = build_lag_matrix(&[1.0, 2.0, 3.0, 4.0, 5.0], 2, 0..5).unwrap();
        assert_eq!(p.response.as_slice(), &[3.0, 4.0, 5.0]);
        assert_eq!(p.design.row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 2.0, 1.0]);
        assert_eq!(p.design.row(1).iter().copied().collect::<Vec<_>>(), vec![1.0, 3.0, 2.0]);
        assert_eq!(p.design.row(2).iter().copied().collect::<Vec<_>>(), vec![1.0, 4.0, 3.0]);
        assert_eq!(p.column_labels[1].to_string(), "lag1");
        assert_eq!(p.column_labels[2].to_string(), "lag2");
    }

    #[test]
    fn lag_matrix_dimensions_and_constant() {
        let p = build_lag_matrix(&[7.0; 10], 1, 0..10).unwrap();
        assert_eq!(p.design.shape(), (9, 2));
        let c = build_lag_matrix(&[3.0; 20], 4, 0..20).unwrap();
        assert!(c.design.columns(1, 4).iter().all(|&v| v == 3.0));
        assert!(c.response.iter().all(|&v| v == 3.0));
        assert!(matches!(
            build_lag_matrix(&[1.0; 5], 5, 0..5),
            Err(Error::WindowTooShort { .. })
        ));
    }

    #[test]
    fn standardize_examples() {
        let p = RegressionProblem::from_columns(
            DVector::from_vec(vec![1.0, 2.0]),
            DMatrix::from_column_slice(2, 1, &[3.0, 4.0]),
        )
        .unwrap();
        let s = standardize_columns(&p).unwrap();
        assert_relative_eq!(s.design[(0, 0)], 0.6, epsilon = 1e-15);
        assert_relative_eq!(s.design[(1, 0)], 0.8, epsilon = 1e-15);
        assert_eq!(s.column_scales, vec![5.0]);

        let again = standardize_columns(&RegressionProblem {
            column_scales: vec![1.0],
            ..s.clone()
        })
        .unwrap();
        assert_relative_eq!(again.column_scales[0], 1.0, epsilon = 1e-15);
        assert_relative_eq!(again.design, s.design, epsilon = 1e-15);

        let z = RegressionProblem::from_columns(
            DVector::from_vec(vec![1.0, 2.0]),
            DMatrix::zeros(2, 1),
        )
        .unwrap();
        assert_eq!(standardize_columns(&z).unwrap_err(), Error::ZeroColumn(0));
    }

    #[test]
    fn label_round_trip() {
        for l in [
            ColumnLabel::Intercept,
            ColumnLabel::own_lag(24),
            ColumnLabel::cross_lag("meter:7", 1),
        ] {
            assert_eq!(l.to_string().parse::<ColumnLabel>().unwrap(), l);
        }
        assert!("lagx".parse::<ColumnLabel>().is_err());
    }

    #[test]
    fn center_and_normalize_flags_flat_columns() {
        let mut m = DMatrix::from_column_slice(3, 2, &[1.0, 2.0, 3.0, 5.0, 5.0, 5.0]);
        assert_eq!(center_and_normalize(&mut m).unwrap_err(), Error::ZeroColumn(1));
        let mut ok = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]);
        center_and_normalize(&mut ok).unwrap();
        assert_relative_eq!(ok.column(0).norm(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(ok.column(0).sum(), 0.0, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn lag_rows_are_shifted_copies(values in prop::collection::vec(0.0f64..10.0, 12..40), lag in 1usize..6) {
            let p = build_lag_matrix(&values, lag, 0..values.len()).unwrap();
            for r in 0..p.rows() {
                for k in 1..=lag {
                    if r >= k {
                        prop_assert_eq!(p.design[(r, k)], p.response[r - k]);
                    }
                    prop_assert_eq!(p.design[(r, k)], values[r + lag - k]);
                }
                prop_assert_eq!(p.design[(r, 0)], 1.0);
            }
        }

        #[test]
        fn standardization_preserves_fitted_values(
            values in prop::collection::vec(0.1f64..10.0, 15..30),
            beta in prop::collection::vec(-2.0f64..2.0, 4),
        ) {
            let raw = build_lag_matrix(&values, 3, 0..values.len()).unwrap();
            let std = standardize_columns(&raw).unwrap();
            for j in 1..std.cols() {
                prop_assert!((std.design.column(j).norm() - 1.0).abs() < 1e-10);
            }
            let b = DVector::from_vec(beta);
            let fitted_std = &std.design * &b;
            let rescaled = DVector::from_iterator(4, (0..4).map(|j| b[j] / std.column_scales[j]));
            let fitted_raw = &raw.design * &rescaled;
            for (a, c) in fitted_std.iter().zip(fitted_raw.iter()) {
                prop_assert!((a - c).abs() < 1e-10 * (1.0 + a.abs()));
            }
        }
    }
}
