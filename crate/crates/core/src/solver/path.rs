//! Homotopy continuation of the LASSO path from `lambda = inf` downward,
//! recording the penalties at which variables enter.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::design::RegressionProblem;
use crate::error::{Error, Result};

use super::gram::GramSystem;

/// Correlations closer than this (relative) count as a tie.
const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoPathPrefix {
    /// `max_j |x_j' y_c|`, zero when the response carries no signal.
    pub lambda_max: f64,
    /// Penalties at which a variable entered, non-increasing.
    pub knots: Vec<f64>,
    /// Feature index (intercept excluded) entering at each knot.
    pub entering: Vec<usize>,
    /// Set when an entry was decided by a tie and broken by lowest index.
    pub degenerate: bool,
}

impl LassoPathPrefix {
    /// Knot `k` (1-based), or 0 when the path has fewer entries.
    pub fn knot(&self, k: usize) -> f64 {
        self.knots.get(k - 1).copied().unwrap_or(0.0)
    }
}

/// First `num_knots` entry events of the LASSO path.
pub fn lasso_path_prefix(problem: &RegressionProblem, num_knots: usize) -> Result<LassoPathPrefix> {
    path_prefix_gram(&GramSystem::from_problem(problem), num_knots)
}

pub fn path_prefix_gram(sys: &GramSystem, num_knots: usize) -> Result<LassoPathPrefix> {
    if num_knots == 0 {
        return Err(Error::InvalidConfig("num_knots must be at least 1".into()));
    }
    let p = sys.dim();
    let c = &sys.xty;
    let lambda_max = sys.lambda_max();
    let mut out = LassoPathPrefix {
        lambda_max,
        knots: Vec::new(),
        entering: Vec::new(),
        degenerate: false,
    };
    if lambda_max <= 0.0 {
        return Ok(out);
    }

    let usable: Vec<bool> = (0..p).map(|j| sys.gram[(j, j)] > 0.0).collect();
    let first = (0..p)
        .filter(|&j| usable[j])
        .find(|&j| c[j].abs() >= lambda_max * (1.0 - TIE_TOL))
        .expect("lambda_max is attained");
    out.degenerate |= (first + 1..p)
        .any(|j| usable[j] && c[j].abs() >= lambda_max * (1.0 - TIE_TOL));

    let mut active = vec![first];
    let mut signs = vec![c[first].signum()];
    let mut lambda = lambda_max;
    out.knots.push(lambda);
    out.entering.push(first);

    while out.knots.len() < num_knots && active.len() < p {
        // beta_A(l) = a - l * b on the current segment.
        let k = active.len();
        let g_aa = DMatrix::from_fn(k, k, |r, s| sys.gram[(active[r], active[s])]);
        let c_a = DVector::from_iterator(k, active.iter().map(|&j| c[j]));
        let s_a = DVector::from_column_slice(&signs);
        let chol = g_aa.cholesky().ok_or(Error::RankDeficient)?;
        let a = chol.solve(&c_a);
        let b = chol.solve(&s_a);

        let floor = lambda * TIE_TOL;
        let mut best: Option<(f64, Event)> = None;
        let mut tie = false;
        let mut consider = |cand: f64, ev: Event, best: &mut Option<(f64, Event)>| {
            if !(cand > floor && cand < lambda - floor) {
                return;
            }
            match best {
                Some((bl, _)) if cand < *bl * (1.0 - TIE_TOL) => {}
                Some((bl, _)) if cand <= *bl * (1.0 + TIE_TOL) => tie = true,
                _ => *best = Some((cand, ev)),
            }
        };

        for j in 0..p {
            if !usable[j] || active.contains(&j) {
                continue;
            }
            // corr_j(l) = pj + l * qj must reach +-l.
            let g_ja: DVector<f64> =
                DVector::from_iterator(k, active.iter().map(|&i| sys.gram[(j, i)]));
            let pj = c[j] - g_ja.dot(&a);
            let qj = g_ja.dot(&b);
            if 1.0 - qj > 1e-14 {
                consider(pj / (1.0 - qj), Event::Enter(j, 1.0), &mut best);
            }
            if 1.0 + qj > 1e-14 {
                consider(-pj / (1.0 + qj), Event::Enter(j, -1.0), &mut best);
            }
        }
        for idx in 0..k {
            if b[idx] != 0.0 {
                consider(a[idx] / b[idx], Event::Drop(idx), &mut best);
            }
        }

        let Some((next, event)) = best else { break };
        out.degenerate |= tie;
        lambda = next;
        match event {
            Event::Enter(j, s) => {
                active.push(j);
                signs.push(s);
                out.knots.push(lambda);
                out.entering.push(j);
            }
            Event::Drop(idx) => {
                active.remove(idx);
                signs.remove(idx);
            }
        }
        if active.is_empty() {
            break;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy)]
enum Event {
    Enter(usize, f64),
    Drop(usize),
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    fn orthogonal_problem(c1: f64, c2: f64) -> RegressionProblem {
        let x = DMatrix::from_row_slice(4, 2, &[0.5, 0.5, 0.5, -0.5, -0.5, 0.5, -0.5, -0.5]);
        let y = x.column(0) * c1 + x.column(1) * c2;
        RegressionProblem::from_columns(y, x).unwrap()
    }

    #[test]
    fn orthogonal_design_knots() {
        let path = lasso_path_prefix(&orthogonal_problem(3.0, 1.0), 2).unwrap();
        assert!((path.knots[0] - 3.0).abs() < 1e-14);
        assert!((path.knots[1] - 1.0).abs() < 1e-14);
        assert_eq!(path.entering, vec![0, 1]);
        assert!(!path.degenerate);
    }

    #[test]
    fn response_equal_to_unit_column() {
        let x = DMatrix::from_row_slice(4, 2, &[0.5, 0.5, 0.5, -0.5, -0.5, 0.5, -0.5, -0.5]);
        let y: DVector<f64> = x.column(0).into();
        let path = lasso_path_prefix(&RegressionProblem::from_columns(y, x).unwrap(), 2).unwrap();
        assert!((path.knot(1) - 1.0).abs() < 1e-14);
        assert_eq!(path.entering[0], 0);
        assert_eq!(path.knots.len(), 1);
        assert_eq!(path.knot(2), 0.0);
    }

    #[test]
    fn zero_response_gives_empty_prefix() {
        let x = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
        let path =
            lasso_path_prefix(&RegressionProblem::from_columns(DVector::zeros(2), x).unwrap(), 3)
                .unwrap();
        assert_eq!(path.lambda_max, 0.0);
        assert!(path.knots.is_empty());
    }

    #[test]
    fn ties_are_flagged_and_broken_low() {
        let path = lasso_path_prefix(&orthogonal_problem(2.0, -2.0), 2).unwrap();
        assert!(path.degenerate);
        assert_eq!(path.entering[0], 0);
    }

    #[test]
    fn single_column_has_one_knot() {
        let x = DMatrix::from_column_slice(3, 1, &[0.6, 0.8, 0.0]);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let path = lasso_path_prefix(&RegressionProblem::from_columns(y, x).unwrap(), 2).unwrap();
        assert!((path.knot(1) - 2.2).abs() < 1e-14);
        assert_eq!(path.knot(2), 0.0);
    }
}
