//! First-stage CATE constructions: the regression-adjustment (RA) learner
//! and plain separate regression.
//!
//! The RA learner fits per-arm nuisance regressions, turns every observation
//! into a pseudo-outcome whose conditional mean is the treatment effect when
//! the nuisances are exact, and regresses the pseudo-outcomes on the
//! covariates. Both stages run on the same split; no rows are discarded.

use nalgebra::{DMatrix, DVector};

use crate::data::LabeledDataset;
use crate::error::{CokeError, Result};
use crate::kernel::KernelSpec;
use crate::krr::{fit, fit_arm, fit_grid, KrrModel};

/// Anything that maps covariate rows to real predictions. Implemented by the
/// fitted models and by [`FnModel`] so tests can inject analytic oracles in
/// place of estimated nuisances.
pub trait Regressor: Sync {
    fn predict(&self, covariates: &DMatrix<f64>) -> Result<DVector<f64>>;
}

impl Regressor for KrrModel {
    fn predict(&self, covariates: &DMatrix<f64>) -> Result<DVector<f64>> {
        KrrModel::predict(self, covariates)
    }
}

impl<T: Regressor> Regressor for &T {
    fn predict(&self, covariates: &DMatrix<f64>) -> Result<DVector<f64>> {
        (*self).predict(covariates)
    }
}

/// A closure over covariate rows, used to inject known functions.
pub struct FnModel<F: Fn(&[f64]) -> f64 + Sync>(pub F);

impl<F: Fn(&[f64]) -> f64 + Sync> Regressor for FnModel<F> {
    fn predict(&self, covariates: &DMatrix<f64>) -> Result<DVector<f64>> {
        let out: Vec<f64> = (0..covariates.nrows())
            .map(|i| {
                let row: Vec<f64> = covariates.row(i).iter().copied().collect();
                (self.0)(&row)
            })
            .collect();
        Ok(DVector::from_vec(out))
    }
}

/// A fitted CATE estimator.
#[derive(Debug, Clone)]
pub enum CateModel {
    /// Difference of two per-arm regressions, `f1 − f0`.
    Difference { f1: KrrModel, f0: KrrModel },
    /// A single second-stage regression on pseudo-outcomes.
    Single { h: KrrModel },
    /// Equal-weight average of member models.
    Average { members: Vec<CateModel> },
}

impl CateModel {
    /// Covariate dimension the model expects.
    pub fn dim(&self) -> usize {
        match self {
            CateModel::Difference { f1, .. } => f1.dim(),
            CateModel::Single { h } => h.dim(),
            CateModel::Average { members } => members[0].dim(),
        }
    }

    pub fn predict(&self, covariates: &DMatrix<f64>) -> Result<DVector<f64>> {
        match self {
            CateModel::Difference { f1, f0 } => {
                Ok(f1.predict(covariates)? - f0.predict(covariates)?)
            }
            CateModel::Single { h } => h.predict(covariates),
            CateModel::Average { members } => {
                if members.is_empty() {
                    return Err(CokeError::invalid("average of zero models"));
                }
                let mut acc = members[0].predict(covariates)?;
                for member in &members[1..] {
                    acc += member.predict(covariates)?;
                }
                Ok(acc / members.len() as f64)
            }
        }
    }
}

impl Regressor for CateModel {
    fn predict(&self, covariates: &DMatrix<f64>) -> Result<DVector<f64>> {
        CateModel::predict(self, covariates)
    }
}

/// The three regularizers of an RA fit: `lambda00` and `lambda01` for the
/// per-arm nuisance stages, `lambda1` for the pseudo-outcome stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularizerTriple {
    pub lambda00: f64,
    pub lambda01: f64,
    pub lambda1: f64,
}

impl RegularizerTriple {
    pub fn new(lambda00: f64, lambda01: f64, lambda1: f64) -> Result<Self> {
        for l in [lambda00, lambda01, lambda1] {
            if !(l.is_finite() && l > 0.0) {
                return Err(CokeError::invalid(format!(
                    "regularizers must be positive, got {l}"
                )));
            }
        }
        Ok(Self {
            lambda00,
            lambda01,
            lambda1,
        })
    }
}

/// Pseudo-outcomes `mᵢ = (yᵢ − f0(zᵢ)) 1(aᵢ=1) + (f1(zᵢ) − yᵢ) 1(aᵢ=0)`.
///
/// With exact nuisances and noiseless outcomes, `mᵢ` equals the true
/// treatment effect at `zᵢ` pointwise.
pub fn pseudo_outcomes(
    data: &LabeledDataset,
    f0: &impl Regressor,
    f1: &impl Regressor,
) -> Result<DVector<f64>> {
    let p0 = f0.predict(data.covariates())?;
    let p1 = f1.predict(data.covariates())?;
    let y = data.outcomes();
    let out: Vec<f64> = data
        .treatments()
        .iter()
        .enumerate()
        .map(|(i, &a)| if a == 1 { y[i] - p0[i] } else { p1[i] - y[i] })
        .collect();
    Ok(DVector::from_vec(out))
}

/// RA learner: per-arm nuisance fits, pseudo-outcomes on every row of the
/// split, then a second-stage fit of the pseudo-outcomes on all covariates.
pub fn ra_learner(
    spec: &KernelSpec,
    data: &LabeledDataset,
    lambdas: &RegularizerTriple,
) -> Result<CateModel> {
    let f0 = fit_arm(spec, data, 0, lambdas.lambda00)?;
    let f1 = fit_arm(spec, data, 1, lambdas.lambda01)?;
    let m = pseudo_outcomes(data, &f0, &f1)?;
    let h = fit(spec, data.covariates(), &m, lambdas.lambda1)?;
    Ok(CateModel::Single { h })
}

/// Nuisance fits plus one RA candidate per second-stage regularizer. All
/// candidates share the same `f0`, `f1` and the same pseudo-outcomes; the
/// second stage reuses a single eigendecomposition across the grid.
pub struct RaGridFit {
    pub f0: KrrModel,
    pub f1: KrrModel,
    pub candidates: Vec<CateModel>,
}

pub fn ra_learner_grid(
    spec: &KernelSpec,
    data: &LabeledDataset,
    lambda00: f64,
    lambda01: f64,
    lambda1_grid: &[f64],
) -> Result<RaGridFit> {
    let f0 = fit_arm(spec, data, 0, lambda00)?;
    let f1 = fit_arm(spec, data, 1, lambda01)?;
    let m = pseudo_outcomes(data, &f0, &f1)?;
    let fits = fit_grid(spec, data.covariates(), &m, lambda1_grid)?;
    Ok(RaGridFit {
        f0,
        f1,
        candidates: fits.into_iter().map(|h| CateModel::Single { h }).collect(),
    })
}

/// Separate regression: independent per-arm fits, CATE as their difference.
pub fn separate_regression(
    spec: &KernelSpec,
    data: &LabeledDataset,
    lambda0: f64,
    lambda1: f64,
) -> Result<CateModel> {
    let f0 = fit_arm(spec, data, 0, lambda0)?;
    let f1 = fit_arm(spec, data, 1, lambda1)?;
    Ok(CateModel::Difference { f1, f0 })
}
