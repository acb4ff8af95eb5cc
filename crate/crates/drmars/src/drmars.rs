//! The dimension-reduced estimator: project covariates through the
//! estimated directions, refit the hinge-spline model on the projections,
//! or — in combined mode — on the original covariates augmented with the
//! projections. Includes the additive decomposition of combined models and
//! threshold classification for 0/1 responses.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mars::{self, MarsConfig, MarsModel};
use crate::sdr::{self, SdrEstimate};
use crate::numerics::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Inner model on the projected covariates only.
    Reduced,
    /// Inner model on original covariates followed by the projections.
    Combined,
}

/// Target dimension: fixed, or chosen by cross-validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DimSelect {
    Fixed(usize),
    Auto,
}

/// Upper bound scanned by the cross-validated dimension choice.
pub const AUTO_D_MAX: usize = 5;
/// Folds used by the cross-validated dimension choice.
pub const AUTO_FOLDS: usize = 10;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DrMarsModel {
    pub sdr: SdrEstimate,
    pub inner: MarsModel,
    pub mode: Mode,
    pub input_dim: usize,
    /// Per-variable (mean, scale) applied to raw inputs before anything else.
    pub standardization: Option<Vec<(f64, f64)>>,
}

impl DrMarsModel {
    pub fn validate(&self) -> Result<()> {
        let d = self.sdr.chosen_d;
        let expected = match self.mode {
            Mode::Reduced => d,
            Mode::Combined => self.input_dim + d,
        };
        if self.inner.n_vars() != expected {
            return Err(Error::DimensionMismatch(format!(
                "inner model dimension {} does not match mode ({} expected)",
                self.inner.n_vars(),
                expected
            )));
        }
        if self.sdr.directions.rows() != self.input_dim {
            return Err(Error::DimensionMismatch(
                "direction rows do not match the input dimension".into(),
            ));
        }
        if d < 1 || d > self.input_dim || self.sdr.directions.cols() < d {
            return Err(Error::InvalidArgument(format!(
                "chosen dimension {d} invalid for input dimension {}",
                self.input_dim
            )));
        }
        if let Some(params) = &self.standardization {
            if params.len() != self.input_dim {
                return Err(Error::DimensionMismatch(
                    "standardization parameter count does not match input dimension".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn with_standardization(mut self, params: Vec<(f64, f64)>) -> Result<Self> {
        if params.len() != self.input_dim {
            return Err(Error::DimensionMismatch(
                "standardization parameter count does not match input dimension".into(),
            ));
        }
        self.standardization = Some(params);
        Ok(self)
    }
}

/// Projected covariates `x * directions` (first `chosen_d` columns).
pub fn project(est: &SdrEstimate, x: &DenseMatrix) -> Result<DenseMatrix> {
    sdr::project_onto(x, &est.directions, est.chosen_d)
}

/// Fits the reduced-mode model: estimate directions, project the training
/// covariates, and refit the spline model on the projections. `Auto` picks
/// the dimension by 10-fold cross-validation up to [`AUTO_D_MAX`].
pub fn fit_drmars(
    x: &DenseMatrix,
    y: &[f64],
    dim: DimSelect,
    cfg: &MarsConfig,
    seed: u64,
) -> Result<DrMarsModel> {
    let est = estimate_directions(x, y, dim, cfg, seed)?;
    let projected = project(&est, x)?;
    let inner = mars::fit(&projected, y, cfg)?;
    let model = DrMarsModel {
        sdr: est,
        inner,
        mode: Mode::Reduced,
        input_dim: x.cols(),
        standardization: None,
    };
    model.validate()?;
    Ok(model)
}

/// Fits the combined-mode model on `[x | x * directions]`, letting the term
/// selection choose between original and projected covariates.
pub fn fit_combined(
    x: &DenseMatrix,
    y: &[f64],
    dim: DimSelect,
    cfg: &MarsConfig,
    seed: u64,
) -> Result<DrMarsModel> {
    let est = estimate_directions(x, y, dim, cfg, seed)?;
    let projected = project(&est, x)?;
    let augmented = x.hcat(&projected)?;
    let inner = mars::fit(&augmented, y, cfg)?;
    let model = DrMarsModel {
        sdr: est,
        inner,
        mode: Mode::Combined,
        input_dim: x.cols(),
        standardization: None,
    };
    model.validate()?;
    Ok(model)
}

fn estimate_directions(
    x: &DenseMatrix,
    y: &[f64],
    dim: DimSelect,
    cfg: &MarsConfig,
    seed: u64,
) -> Result<SdrEstimate> {
    match dim {
        DimSelect::Fixed(d) => {
            if d == 0 {
                return Err(Error::InvalidArgument(
                    "reduction dimension must be at least 1".into(),
                ));
            }
            sdr::fit_sdr(x, y, d, cfg)
        }
        DimSelect::Auto => {
            let d_max = AUTO_D_MAX.min(x.cols());
            let outer = mars::fit(x, y, cfg)?;
            let full = sdr::sdr_from_model(&outer, x, d_max)?;
            let (chosen, table) =
                sdr::select_dimension_from(&full, x, y, d_max, AUTO_FOLDS, cfg, seed)?;
            // The chosen-d directions are the leading columns of the same
            // decomposition the cross-validation scanned.
            let directions = DenseMatrix::from_fn(full.directions.rows(), chosen, |i, j| {
                full.directions.get(i, j)
            })?;
            Ok(SdrEstimate {
                directions,
                eigenvalues: full.eigenvalues,
                chosen_d: chosen,
                cv_table: Some(table),
            })
        }
    }
}

/// Applies stored standardization (if any) and evaluates the model.
pub fn predict_drmars(model: &DrMarsModel, x: &DenseMatrix) -> Result<Vec<f64>> {
    if x.cols() != model.input_dim {
        return Err(Error::DimensionMismatch(format!(
            "model expects {} covariates, got {}",
            model.input_dim,
            x.cols()
        )));
    }
    let x = apply_standardization(model, x)?;
    let projected = project(&model.sdr, &x)?;
    match model.mode {
        Mode::Reduced => model.inner.predict(&projected),
        Mode::Combined => model.inner.predict(&x.hcat(&projected)?),
    }
}

fn apply_standardization(model: &DrMarsModel, x: &DenseMatrix) -> Result<DenseMatrix> {
    match &model.standardization {
        None => Ok(x.clone()),
        Some(params) => DenseMatrix::from_fn(x.rows(), x.cols(), |i, j| {
            let (mean, scale) = params[j];
            (x.get(i, j) - mean) / scale
        }),
    }
}

/// Splits a combined-mode model into its intercept, the sub-model whose
/// terms touch only projected coordinates, and the sub-model with at least
/// one original coordinate. Both sub-models evaluate on the augmented
/// `[x | x*]` coordinates and their sum plus the intercept reproduces the
/// full prediction exactly.
pub fn decompose_combined(model: &DrMarsModel) -> Result<(f64, MarsModel, MarsModel)> {
    if model.mode != Mode::Combined {
        return Err(Error::InvalidArgument(
            "decomposition requires a combined-mode model".into(),
        ));
    }
    let p = model.input_dim;
    let inner = &model.inner;
    let mut proj_terms = Vec::new();
    let mut proj_coefs = vec![0.0];
    let mut orig_terms = Vec::new();
    let mut orig_coefs = vec![0.0];
    for (term, &coef) in inner.terms().iter().zip(&inner.coefficients()[1..]) {
        let only_projected = term.factors().iter().all(|f| f.var_index >= p);
        if only_projected {
            proj_terms.push(term.clone());
            proj_coefs.push(coef);
        } else {
            orig_terms.push(term.clone());
            orig_coefs.push(coef);
        }
    }
    let projected_part = MarsModel::new(proj_terms, proj_coefs, 0.0, 0.0, inner.n_train(), inner.n_vars())?;
    let original_part = MarsModel::new(orig_terms, orig_coefs, 0.0, 0.0, inner.n_train(), inner.n_vars())?;
    Ok((inner.intercept(), projected_part, original_part))
}

/// Indicator classification: label 1 where the prediction strictly exceeds
/// the threshold.
pub fn classify(model: &DrMarsModel, x: &DenseMatrix, threshold: f64) -> Result<Vec<u8>> {
    let preds = predict_drmars(model, x)?;
    Ok(preds.iter().map(|&p| u8::from(p > threshold)).collect())
}
