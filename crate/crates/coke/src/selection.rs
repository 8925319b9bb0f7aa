//! Model selection against imputed target outcomes.
//!
//! The holdout split trains a lightly regularized difference model `h̃` that
//! imputes a treatment-effect value at every unlabeled target covariate.
//! Each candidate is then scored by its mean squared distance to those
//! imputed values, and the minimizer wins.

use rayon::prelude::*;

use crate::cate::{CateModel, Regressor, RegularizerTriple};
use crate::data::{LabeledDataset, UnlabeledDataset};
use crate::error::{CokeError, Result};
use crate::kernel::KernelSpec;
use crate::krr::fit_arm;

/// A CATE candidate together with the regularizers that produced it.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub lambdas: RegularizerTriple,
    pub model: CateModel,
}

/// Outcome of a selection round.
#[derive(Debug, Clone)]
pub struct SelectionReport {
    /// Mean squared distance to the imputed target outcomes, per candidate.
    pub losses: Vec<f64>,
    pub chosen_index: usize,
    pub lambda_chosen: RegularizerTriple,
}

/// The default imputation regularizer `ξ log n / n`, where `n` is the full
/// source sample size (not the holdout size).
pub fn default_imputation_lambda(xi: f64, n: usize) -> f64 {
    xi * (n as f64).ln() / n as f64
}

/// Imputation model `h̃ = f̃₁ − f̃₀` from per-arm fits on the holdout split.
/// The ridge terms scale with the holdout size, as in every arm-indicator
/// objective.
pub fn build_imputation(
    spec: &KernelSpec,
    holdout: &LabeledDataset,
    lambda_tilde0: f64,
    lambda_tilde1: f64,
) -> Result<CateModel> {
    let f0 = fit_arm(spec, holdout, 0, lambda_tilde0)?;
    let f1 = fit_arm(spec, holdout, 1, lambda_tilde1)?;
    Ok(CateModel::Difference { f1, f0 })
}

/// Scores every candidate by `L(h) = (1/n_T) Σᵢ (h̃(z₀ᵢ) − h(z₀ᵢ))²` and
/// picks the argmin. Ties in loss break toward the smallest second-stage
/// regularizer, then the smallest index.
pub fn select(
    candidates: &[Candidate],
    imputation: &impl Regressor,
    target: &UnlabeledDataset,
) -> Result<SelectionReport> {
    if candidates.is_empty() {
        return Err(CokeError::invalid("no candidates to select from"));
    }
    let imputed = imputation.predict(target.covariates())?;
    let losses: Vec<f64> = candidates
        .par_iter()
        .map(|candidate| {
            let preds = candidate.model.predict(target.covariates())?;
            let mut acc = 0.0;
            for i in 0..imputed.len() {
                let diff = imputed[i] - preds[i];
                acc += diff * diff;
            }
            Ok(acc / imputed.len() as f64)
        })
        .collect::<Result<_>>()?;
    let mut chosen = 0;
    for (i, &loss) in losses.iter().enumerate().skip(1) {
        let tighter = loss < losses[chosen]
            || (loss == losses[chosen]
                && candidates[i].lambdas.lambda1 < candidates[chosen].lambdas.lambda1);
        if tighter {
            chosen = i;
        }
    }
    Ok(SelectionReport {
        losses,
        chosen_index: chosen,
        lambda_chosen: candidates[chosen].lambdas,
    })
}
