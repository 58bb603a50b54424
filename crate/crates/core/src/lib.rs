//! Uncertainty-aware multivariate time-series imputation.
//!
//! A bidirectional recurrent imputer whose quantile-regression heads share one
//! trunk ("quantile sub-ensembles"). The heads are mixed into a Gaussian
//! predictive distribution per missing cell. The crate also includes classical
//! baselines, masked MAE and CRPS metrics, and a benchmark harness.

pub mod checkpoint;
pub mod cli;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod impute;
pub mod io_util;
pub mod linalg;
pub mod model;
pub mod quantile;
pub mod synthetic;
pub mod training;

pub use error::{ImputeError, Result};
