//! Sparse autoregressive forecasting of hourly household electricity use.
//!
//! Each meter is modelled as a LASSO-regularised autoregression over up to
//! ten days of lags. A covariance test on the LASSO path then decides
//! whether one other meter's previous-hour reading explains the remaining
//! residual well enough to be added as a regressor.

pub mod baselines;
pub mod design;
pub mod error;
pub mod eval;
pub mod model;
pub mod series;
pub mod significance;
pub mod solver;
pub mod synth;
pub mod window;

pub use error::{Error, Result};
