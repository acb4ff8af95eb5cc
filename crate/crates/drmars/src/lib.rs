//! Nonparametric regression with hinge splines and gradient-based
//! sufficient dimension reduction.
//!
//! The crate provides three estimators and the machinery around them:
//!
//! * [`mars`] — forward/backward stepwise regression over products of hinge
//!   functions (piecewise-linear splines with data-driven knots);
//! * [`sdr`] — estimation of the central mean subspace from the fitted
//!   model's gradient field via the outer product of gradients, including
//!   cross-validated dimension selection;
//! * [`drmars`] — the dimension-reduced estimator that refits the spline
//!   model on projected covariates, with a robust combined-covariate
//!   variant and threshold classification.
//!
//! [`simbench`] generates the synthetic benchmark suite and evaluation
//! metrics, and [`io`] handles CSV data, standardization, and model
//! serialization for the command-line tool.

pub mod basis;
pub mod drmars;
pub mod error;
pub mod io;
pub mod mars;
pub mod numerics;
pub mod sdr;
pub mod simbench;

pub use error::{Error, Result};
