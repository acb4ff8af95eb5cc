//! Forward/backward stepwise regression over hinge-product terms.
//!
//! The forward pass greedily adds reflected hinge pairs, the backward pass
//! prunes terms one at a time and keeps the model with the best generalized
//! cross-validation score, and the final coefficients come from a pivoted
//! least-squares refit.

mod backward;
mod forward;

pub use backward::backward_pass;
pub use forward::forward_pass;

use serde::{Deserialize, Serialize};

use crate::basis::{default_endspan, design_matrix, BasisTerm};
use crate::error::{Error, Result};
use crate::numerics::{dot, DenseMatrix};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarsConfig {
    /// Maximum number of model terms counting the intercept. `None` picks a
    /// sample-size driven default; the backward pass prunes the excess.
    pub max_terms: Option<usize>,
    /// Maximum interaction degree per term.
    pub max_degree: usize,
    /// GCV effective-parameter penalty per knot. `None` means 3 for
    /// interaction models and 2 for additive ones.
    pub gcv_penalty: Option<f64>,
    /// Keep every `minspan`-th candidate knot.
    pub minspan: usize,
    /// Drop this many extreme order statistics from each end of the knot
    /// candidate list. `None` trims 5% of the sample, capped at 10.
    pub endspan: Option<usize>,
    /// Stop the forward pass when the best relative RSS improvement falls
    /// below this value.
    pub forward_tol: f64,
}

impl Default for MarsConfig {
    fn default() -> Self {
        Self {
            max_terms: None,
            max_degree: 2,
            gcv_penalty: None,
            minspan: 1,
            endspan: None,
            forward_tol: 1e-10,
        }
    }
}

impl MarsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_degree < 1 {
            return Err(Error::InvalidArgument("max_degree must be >= 1".into()));
        }
        if let Some(m) = self.max_terms {
            if m < 1 {
                return Err(Error::InvalidArgument("max_terms must be >= 1".into()));
            }
        }
        if let Some(p) = self.gcv_penalty {
            if !(p >= 0.0) {
                return Err(Error::InvalidArgument("gcv_penalty must be >= 0".into()));
            }
        }
        if !(self.forward_tol >= 0.0) {
            return Err(Error::InvalidArgument("forward_tol must be >= 0".into()));
        }
        if self.minspan < 1 {
            return Err(Error::InvalidArgument("minspan must be >= 1".into()));
        }
        Ok(())
    }

    pub(crate) fn resolved_max_terms(&self, n: usize, p: usize) -> usize {
        let m = match self.max_terms {
            Some(m) => m,
            None => (2 * (n.min(5 * p) / 10) + 1).clamp(21, 200),
        };
        m.min((n / 2).max(1)).max(1)
    }

    pub(crate) fn resolved_penalty(&self) -> f64 {
        self.gcv_penalty
            .unwrap_or(if self.max_degree > 1 { 3.0 } else { 2.0 })
    }

    pub(crate) fn resolved_endspan(&self, n: usize) -> usize {
        self.endspan.unwrap_or_else(|| default_endspan(n))
    }
}

/// A fitted hinge-spline model: selected terms plus least-squares
/// coefficients (index 0 is the intercept).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarsModel {
    terms: Vec<BasisTerm>,
    coefficients: Vec<f64>,
    training_rss: f64,
    gcv: f64,
    n_train: usize,
    n_vars: usize,
}

impl MarsModel {
    pub fn new(
        terms: Vec<BasisTerm>,
        coefficients: Vec<f64>,
        training_rss: f64,
        gcv: f64,
        n_train: usize,
        n_vars: usize,
    ) -> Result<Self> {
        if coefficients.len() != terms.len() + 1 {
            return Err(Error::DimensionMismatch(format!(
                "{} terms require {} coefficients, got {}",
                terms.len(),
                terms.len() + 1,
                coefficients.len()
            )));
        }
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("model coefficient".into()));
        }
        if !(training_rss >= 0.0) || !(gcv >= 0.0) {
            return Err(Error::InvalidArgument(
                "training_rss and gcv must be non-negative".into(),
            ));
        }
        for t in &terms {
            if let Some(maxv) = t.max_var_index() {
                if maxv >= n_vars {
                    return Err(Error::IndexOutOfRange(format!(
                        "term uses variable {maxv} but model dimension is {n_vars}"
                    )));
                }
            }
        }
        Ok(Self {
            terms,
            coefficients,
            training_rss,
            gcv,
            n_train,
            n_vars,
        })
    }

    pub fn terms(&self) -> &[BasisTerm] {
        &self.terms
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn intercept(&self) -> f64 {
        self.coefficients[0]
    }

    pub fn training_rss(&self) -> f64 {
        self.training_rss
    }

    pub fn gcv(&self) -> f64 {
        self.gcv
    }

    pub fn n_train(&self) -> usize {
        self.n_train
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn predict_row(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_vars {
            return Err(Error::DimensionMismatch(format!(
                "model expects {} covariates, got {}",
                self.n_vars,
                x.len()
            )));
        }
        let mut acc = self.coefficients[0];
        for (t, c) in self.terms.iter().zip(&self.coefficients[1..]) {
            acc += c * t.eval(x)?;
        }
        Ok(acc)
    }

    pub fn predict(&self, x: &DenseMatrix) -> Result<Vec<f64>> {
        if x.cols() != self.n_vars {
            return Err(Error::DimensionMismatch(format!(
                "model expects {} covariates, got {}",
                self.n_vars,
                x.cols()
            )));
        }
        (0..x.rows()).map(|i| self.predict_row(x.row(i))).collect()
    }
}

/// Generalized cross-validation score `(rss/n) / (1 - C/n)^2` with effective
/// parameter count `C = n_terms + penalty * n_knots`. Over-parameterized
/// candidates (`C >= n`) score infinity.
pub fn gcv_score(
    rss: f64,
    n: usize,
    n_terms_incl_intercept: usize,
    n_knots: usize,
    penalty: f64,
) -> f64 {
    let c = n_terms_incl_intercept as f64 + penalty * n_knots as f64;
    let n = n as f64;
    if c >= n {
        return f64::INFINITY;
    }
    let denom = 1.0 - c / n;
    (rss / n) / (denom * denom)
}

/// Number of distinct (variable, knot) pairs across the given terms.
pub(crate) fn count_knots(terms: &[BasisTerm]) -> usize {
    let mut seen = std::collections::BTreeSet::new();
    for t in terms {
        for f in t.factors() {
            let knot = if f.knot == 0.0 { 0.0 } else { f.knot };
            seen.insert((f.var_index, knot.to_bits()));
        }
    }
    seen.len()
}

/// Full MARS fit: forward pass, backward pruning, final least squares.
pub fn fit(x: &DenseMatrix, y: &[f64], cfg: &MarsConfig) -> Result<MarsModel> {
    let terms = forward_pass(x, y, cfg)?;
    backward_pass(&terms, x, y, cfg)
}

/// Training residual sum of squares of a term set under a least-squares fit;
/// used by the pruning loop and the final refit.
pub(crate) fn refit_terms(
    terms: &[BasisTerm],
    x: &DenseMatrix,
    y: &[f64],
) -> Result<(Vec<f64>, f64)> {
    let design = design_matrix(terms, x)?;
    let coef = crate::numerics::solve_least_squares(&design, y)?;
    let fitted = design.mat_vec(&coef)?;
    let rss = y
        .iter()
        .zip(&fitted)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>();
    Ok((coef, rss))
}

pub(crate) fn check_training_input(x: &DenseMatrix, y: &[f64]) -> Result<()> {
    if x.rows() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} rows but {} responses",
            x.rows(),
            y.len()
        )));
    }
    if x.rows() <= 2 {
        return Err(Error::InvalidArgument(
            "training requires more than two observations".into(),
        ));
    }
    if x.cols() == 0 {
        return Err(Error::InvalidArgument(
            "training requires at least one covariate".into(),
        ));
    }
    if let Some(v) = y.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("response contains {v}")));
    }
    Ok(())
}

pub(crate) fn sum_sq_dev(y: &[f64]) -> f64 {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    y.iter().map(|v| (v - mean) * (v - mean)).sum()
}

#[allow(dead_code)]
pub(crate) fn rss_of(design: &DenseMatrix, coef: &[f64], y: &[f64]) -> f64 {
    let mut rss = 0.0;
    for i in 0..design.rows() {
        let r = dot(design.row(i), coef) - y[i];
        rss += r * r;
    }
    rss
}
