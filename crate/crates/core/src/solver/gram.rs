use nalgebra::{DMatrix, DVector};

use crate::design::RegressionProblem;

/// Raw cross-product sums over a block of rows. Blocks add and subtract,
/// which is how cross-validation forms training sets without refactoring
/// the design.
#[derive(Debug, Clone)]
pub struct Moments {
    pub n: usize,
    pub sum_x: DVector<f64>,
    pub sum_y: f64,
    pub xtx: DMatrix<f64>,
    pub xty: DVector<f64>,
    pub yty: f64,
}

impl Moments {
    /// Moments of the feature columns (intercept excluded) over `rows`.
    pub fn from_rows(problem: &RegressionProblem, rows: std::ops::Range<usize>) -> Self {
        let first = problem.first_feature();
        let p = problem.num_features();
        let x = problem
            .design
            .view((rows.start, first), (rows.len(), p));
        let y = problem.response.rows(rows.start, rows.len());
        Self {
            n: rows.len(),
            sum_x: DVector::from_iterator(p, x.column_iter().map(|c| c.sum())),
            sum_y: y.sum(),
            xtx: x.tr_mul(&x),
            xty: x.tr_mul(&y),
            yty: y.dot(&y),
        }
    }

    pub fn minus(&self, other: &Moments) -> Moments {
        Moments {
            n: self.n - other.n,
            sum_x: &self.sum_x - &other.sum_x,
            sum_y: self.sum_y - other.sum_y,
            xtx: &self.xtx - &other.xtx,
            xty: &self.xty - &other.xty,
            yty: self.yty - other.yty,
        }
    }
}

/// Quadratic part of the LASSO objective in Gram form:
/// `0.5 * yty - beta' xty + 0.5 * beta' gram beta`, after centering when the
/// problem carries an intercept.
#[derive(Debug, Clone)]
pub struct GramSystem {
    pub gram: DMatrix<f64>,
    pub xty: DVector<f64>,
    pub yty: f64,
    pub x_means: DVector<f64>,
    pub y_mean: f64,
    pub centered: bool,
}

impl GramSystem {
    pub fn from_moments(m: &Moments, centered: bool) -> Self {
        let p = m.sum_x.len();
        if !centered || m.n == 0 {
            return Self {
                gram: m.xtx.clone(),
                xty: m.xty.clone(),
                yty: m.yty,
                x_means: DVector::zeros(p),
                y_mean: 0.0,
                centered: false,
            };
        }
        let n = m.n as f64;
        let x_means = &m.sum_x / n;
        let y_mean = m.sum_y / n;
        let mut gram = &m.xtx - (&x_means * x_means.transpose()) * n;
        // Symmetrize against rounding in the rank-one downdate.
        for i in 0..p {
            for j in 0..i {
                let v = 0.5 * (gram[(i, j)] + gram[(j, i)]);
                gram[(i, j)] = v;
                gram[(j, i)] = v;
            }
            if gram[(i, i)] < 0.0 {
                gram[(i, i)] = 0.0;
            }
        }
        let xty = &m.xty - &x_means * (n * y_mean);
        let yty = (m.yty - n * y_mean * y_mean).max(0.0);
        Self {
            gram,
            xty,
            yty,
            x_means,
            y_mean,
            centered: true,
        }
    }

    pub fn from_problem(problem: &RegressionProblem) -> Self {
        let m = Moments::from_rows(problem, 0..problem.rows());
        Self::from_moments(&m, problem.has_intercept)
    }

    pub fn dim(&self) -> usize {
        self.xty.len()
    }

    /// Smallest penalty at which every coefficient is zero.
    pub fn lambda_max(&self) -> f64 {
        self.xty.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn intercept_for(&self, beta: &[f64]) -> f64 {
        if !self.centered {
            return 0.0;
        }
        self.y_mean
            - self
                .x_means
                .iter()
                .zip(beta)
                .map(|(m, b)| m * b)
                .sum::<f64>()
    }

    /// `0.5 * ||y_c - X_c beta||^2 + lambda * ||beta||_1` in Gram form.
    pub fn objective(&self, beta: &[f64], lambda: f64) -> f64 {
        let b = DVector::from_column_slice(beta);
        let quad = 0.5 * self.yty - b.dot(&self.xty) + 0.5 * b.dot(&(&self.gram * &b));
        quad + lambda * beta.iter().map(|v| v.abs()).sum::<f64>()
    }
}
