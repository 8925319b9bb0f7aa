//! Benchmark CATE estimators: separate regression with pseudo-label
//! selection (SR), the doubly robust two-stage learner (DR), and its
//! density-ratio-augmented variant for the target population (ACW).
//!
//! All krr grids and hold-out selections use the same regularizer grid as
//! the main pipeline. Hold-out selection fits every candidate on one half
//! and keeps the candidate with the smallest validation squared error;
//! the selected model itself (trained on its half) is returned, with no
//! refit. Each estimator derives its internal splits from ChaCha8 streams
//! under its `seed` argument: stream 0 is the top-level split and the
//! per-leg internals use streams `base`, `base+1`, `base+2` with `base = 1`
//! for a plain fit and `base ∈ {1, 4}` for the two cross-fitting legs.

use nalgebra::{DMatrix, DVector};

use crate::cate::CateModel;
use crate::data::{LabeledDataset, UnlabeledDataset};
use crate::error::{CokeError, Result};
use crate::kernel::KernelSpec;
use crate::krr::{fit_arm, fit_grid_scaled, KrrModel};
use crate::logistic::{logistic_fit, DensityRatioModel, LogisticFit};
use crate::rng::{half_split, stream_rng};

/// Knobs shared by the doubly robust estimators.
#[derive(Debug, Clone, Copy)]
pub struct BenchOptions {
    /// Propensities are clamped to `[clip, 1 − clip]` inside the
    /// pseudo-outcome weights. Unclipped inverse-propensity weights blow up
    /// under weak overlap; set to 0 to disable.
    pub propensity_clip: f64,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            propensity_clip: 1e-3,
        }
    }
}

/// Doubly robust pseudo-outcome
/// `φᵢ = (aᵢ − πᵢ)/(πᵢ(1 − πᵢ)) · (yᵢ − f_{aᵢ}(zᵢ)) + f₁(zᵢ) − f₀(zᵢ)`
/// over aligned vectors of propensities and per-arm predictions.
pub fn dr_pseudo_outcomes(
    data: &LabeledDataset,
    propensities: &DVector<f64>,
    f0_predictions: &DVector<f64>,
    f1_predictions: &DVector<f64>,
    clip: f64,
) -> Result<DVector<f64>> {
    let n = data.n();
    if propensities.len() != n || f0_predictions.len() != n || f1_predictions.len() != n {
        return Err(CokeError::invalid(
            "nuisance vectors must align with the dataset rows",
        ));
    }
    let y = data.outcomes();
    let mut out = DVector::zeros(n);
    for (i, &a) in data.treatments().iter().enumerate() {
        let pi = propensities[i].clamp(clip, 1.0 - clip);
        let f_a = if a == 1 {
            f1_predictions[i]
        } else {
            f0_predictions[i]
        };
        let weight = (a as f64 - pi) / (pi * (1.0 - pi));
        out[i] = weight * (y[i] - f_a) + f1_predictions[i] - f0_predictions[i];
    }
    Ok(out)
}

/// Splits a labeled dataset into random halves with a named error context.
fn split_labeled(
    data: &LabeledDataset,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<(LabeledDataset, LabeledDataset)> {
    if data.n() < 2 {
        return Err(CokeError::invalid("need at least two rows to split"));
    }
    let (idx1, idx2) = half_split(data.n(), rng);
    Ok((data.subset(&idx1)?, data.subset(&idx2)?))
}

/// Per-arm hold-out selection: candidates are arm-indicator fits on `train`
/// over the grid, scored by squared error on the `val` rows of that arm.
/// Returns the winning model, its regularizer, and the validation losses.
fn holdout_arm_fit(
    spec: &KernelSpec,
    train: &LabeledDataset,
    val: &LabeledDataset,
    arm: u8,
    grid: &[f64],
    train_name: &str,
    val_name: &str,
) -> Result<(KrrModel, f64, Vec<f64>)> {
    let (z_arm, y_arm) = train.arm_rows(arm).ok_or(CokeError::EmptyArm {
        arm,
        split: train_name.to_string(),
    })?;
    let candidates = fit_grid_scaled(spec, &z_arm, &y_arm, grid, train.n() as f64)?;
    let (zv, yv) = val.arm_rows(arm).ok_or(CokeError::EmptyArm {
        arm,
        split: val_name.to_string(),
    })?;
    let losses: Vec<f64> = candidates
        .iter()
        .map(|model| {
            let preds = model.predict(&zv)?;
            Ok((&preds - &yv).norm_squared() / yv.len() as f64)
        })
        .collect::<Result<_>>()?;
    let best = argmin(&losses);
    Ok((candidates.into_iter().nth(best).unwrap(), grid[best], losses))
}

/// Second-stage hold-out: regress `values` on `covariates` over the grid,
/// training on `train_idx` rows and scoring on `val_idx` rows.
fn holdout_regression(
    spec: &KernelSpec,
    covariates: &DMatrix<f64>,
    values: &DVector<f64>,
    train_idx: &[usize],
    val_idx: &[usize],
    grid: &[f64],
) -> Result<(KrrModel, f64, Vec<f64>)> {
    let take = |idx: &[usize]| -> (DMatrix<f64>, DVector<f64>) {
        (
            DMatrix::from_fn(idx.len(), covariates.ncols(), |i, j| covariates[(idx[i], j)]),
            DVector::from_fn(idx.len(), |i, _| values[idx[i]]),
        )
    };
    let (z_train, v_train) = take(train_idx);
    let (z_val, v_val) = take(val_idx);
    let candidates = fit_grid_scaled(spec, &z_train, &v_train, grid, z_train.nrows() as f64)?;
    let losses: Vec<f64> = candidates
        .iter()
        .map(|model| {
            let preds = model.predict(&z_val)?;
            Ok((&preds - &v_val).norm_squared() / v_val.len() as f64)
        })
        .collect::<Result<_>>()?;
    let best = argmin(&losses);
    Ok((candidates.into_iter().nth(best).unwrap(), grid[best], losses))
}

fn argmin(losses: &[f64]) -> usize {
    let mut best = 0;
    for (i, &l) in losses.iter().enumerate().skip(1) {
        if l < losses[best] {
            best = i;
        }
    }
    best
}

/// The nuisances estimated on one half of the source data: a logistic
/// propensity and hold-out-selected per-arm outcome regressions.
struct Nuisances {
    propensity: LogisticFit,
    f0: KrrModel,
    f1: KrrModel,
}

fn fit_nuisances(
    spec: &KernelSpec,
    data: &LabeledDataset,
    grid: &[f64],
    rng: &mut rand_chacha::ChaCha8Rng,
    context: &str,
) -> Result<Nuisances> {
    let propensity = logistic_fit(data.covariates(), data.treatments())?;
    let (train, val) = split_labeled(data, rng)?;
    let train_name = format!("{context} nuisance training half");
    let val_name = format!("{context} nuisance validation half");
    let (f0, _, _) = holdout_arm_fit(spec, &train, &val, 0, grid, &train_name, &val_name)?;
    let (f1, _, _) = holdout_arm_fit(spec, &train, &val, 1, grid, &train_name, &val_name)?;
    Ok(Nuisances {
        propensity,
        f0,
        f1,
    })
}

/// A fitted doubly robust estimator plus its selection trace.
#[derive(Debug, Clone)]
pub struct DrCateFit {
    pub model: CateModel,
    pub chosen_lambda: f64,
    pub validation_losses: Vec<f64>,
    pub propensity_converged: bool,
}

/// Doubly robust learner: nuisances on one half of the source, pseudo-
/// outcomes on the other, and a hold-out-selected regression of the
/// pseudo-outcomes on the covariates.
pub fn dr_cate(
    spec: &KernelSpec,
    data: &LabeledDataset,
    grid: &[f64],
    options: &BenchOptions,
    seed: u64,
) -> Result<DrCateFit> {
    let (d1, d1p) = split_labeled(data, &mut stream_rng(seed, 0))?;
    dr_parts(spec, &d1, &d1p, grid, options, seed, 1)
}

/// Cross-fitted doubly robust learner: the two halves swap roles and the
/// two selected models are averaged.
pub fn dr_cate_crossfit(
    spec: &KernelSpec,
    data: &LabeledDataset,
    grid: &[f64],
    options: &BenchOptions,
    seed: u64,
) -> Result<(CateModel, Vec<DrCateFit>)> {
    let (d1, d1p) = split_labeled(data, &mut stream_rng(seed, 0))?;
    let leg_a = dr_parts(spec, &d1, &d1p, grid, options, seed, 1)?;
    let leg_b = dr_parts(spec, &d1p, &d1, grid, options, seed, 4)?;
    let model = CateModel::Average {
        members: vec![leg_a.model.clone(), leg_b.model.clone()],
    };
    Ok((model, vec![leg_a, leg_b]))
}

fn dr_parts(
    spec: &KernelSpec,
    d_nuisance: &LabeledDataset,
    d_pseudo: &LabeledDataset,
    grid: &[f64],
    options: &BenchOptions,
    seed: u64,
    stream_base: u64,
) -> Result<DrCateFit> {
    let nuisances = fit_nuisances(
        spec,
        d_nuisance,
        grid,
        &mut stream_rng(seed, stream_base),
        "DR (D1)",
    )?;
    let pi = nuisances
        .propensity
        .model
        .predict_probs(d_pseudo.covariates())?;
    let f0p = nuisances.f0.predict(d_pseudo.covariates())?;
    let f1p = nuisances.f1.predict(d_pseudo.covariates())?;
    let phi = dr_pseudo_outcomes(d_pseudo, &pi, &f0p, &f1p, options.propensity_clip)?;
    let (train_idx, val_idx) = half_split(d_pseudo.n(), &mut stream_rng(seed, stream_base + 1));
    let (model, chosen_lambda, validation_losses) = holdout_regression(
        spec,
        d_pseudo.covariates(),
        &phi,
        &train_idx,
        &val_idx,
        grid,
    )?;
    Ok(DrCateFit {
        model: CateModel::Single { h: model },
        chosen_lambda,
        validation_losses,
        propensity_converged: nuisances.propensity.converged,
    })
}

/// A fitted density-ratio-augmented estimator.
#[derive(Debug, Clone)]
pub struct AcwCateFit {
    pub model: CateModel,
    pub chosen_lambda: f64,
    pub validation_losses: Vec<f64>,
    pub mean_source_weight: f64,
}

/// Density-ratio-augmented doubly robust learner. Source pseudo-outcome
/// rows carry the reweighted inverse-propensity residual; target rows carry
/// the imputed contrast. The second stage regresses the stacked
/// pseudo-outcomes on the stacked covariates with stratified hold-out
/// halves (half of the source rows plus half of the target rows train).
pub fn acw_cate(
    spec: &KernelSpec,
    data: &LabeledDataset,
    target: &UnlabeledDataset,
    grid: &[f64],
    options: &BenchOptions,
    seed: u64,
) -> Result<AcwCateFit> {
    let (d1, d1p) = split_labeled(data, &mut stream_rng(seed, 0))?;
    acw_parts(spec, &d1, &d1p, target, grid, options, seed, 1)
}

pub fn acw_cate_crossfit(
    spec: &KernelSpec,
    data: &LabeledDataset,
    target: &UnlabeledDataset,
    grid: &[f64],
    options: &BenchOptions,
    seed: u64,
) -> Result<(CateModel, Vec<AcwCateFit>)> {
    let (d1, d1p) = split_labeled(data, &mut stream_rng(seed, 0))?;
    let leg_a = acw_parts(spec, &d1, &d1p, target, grid, options, seed, 1)?;
    let leg_b = acw_parts(spec, &d1p, &d1, target, grid, options, seed, 4)?;
    let model = CateModel::Average {
        members: vec![leg_a.model.clone(), leg_b.model.clone()],
    };
    Ok((model, vec![leg_a, leg_b]))
}

#[allow(clippy::too_many_arguments)]
fn acw_parts(
    spec: &KernelSpec,
    d_nuisance: &LabeledDataset,
    d_pseudo: &LabeledDataset,
    target: &UnlabeledDataset,
    grid: &[f64],
    options: &BenchOptions,
    seed: u64,
    stream_base: u64,
) -> Result<AcwCateFit> {
    let nuisances = fit_nuisances(
        spec,
        d_nuisance,
        grid,
        &mut stream_rng(seed, stream_base),
        "ACW (D1)",
    )?;
    let (ratio_model, _) = DensityRatioModel::fit(d_nuisance.covariates(), target.covariates())?;

    let n_src = d_pseudo.n();
    let n_tgt = target.n();
    let total = (n_src + n_tgt) as f64;
    let source_factor = total / n_src as f64;
    let target_factor = total / n_tgt as f64;

    // Source rows: reweighted inverse-propensity residual only.
    let pi = nuisances
        .propensity
        .model
        .predict_probs(d_pseudo.covariates())?;
    let f0_src = nuisances.f0.predict(d_pseudo.covariates())?;
    let f1_src = nuisances.f1.predict(d_pseudo.covariates())?;
    let weights = ratio_model.ratios(d_pseudo.covariates())?;
    let clip = options.propensity_clip;
    let y = d_pseudo.outcomes();
    let mut phi = DVector::zeros(n_src + n_tgt);
    for (i, &a) in d_pseudo.treatments().iter().enumerate() {
        let p = pi[i].clamp(clip, 1.0 - clip);
        let f_a = if a == 1 { f1_src[i] } else { f0_src[i] };
        let ipw = (a as f64 - p) / (p * (1.0 - p));
        phi[i] = source_factor * weights[i] * ipw * (y[i] - f_a);
    }
    // Target rows: imputed contrast only.
    let f0_tgt = nuisances.f0.predict(target.covariates())?;
    let f1_tgt = nuisances.f1.predict(target.covariates())?;
    for i in 0..n_tgt {
        phi[n_src + i] = target_factor * (f1_tgt[i] - f0_tgt[i]);
    }

    let stacked = {
        let p = d_pseudo.dim();
        DMatrix::from_fn(n_src + n_tgt, p, |i, j| {
            if i < n_src {
                d_pseudo.covariates()[(i, j)]
            } else {
                target.covariates()[(i - n_src, j)]
            }
        })
    };

    // Stratified halves: half of the source rows and half of the target
    // rows train, the rest validate.
    let (src_train, src_val) = half_split(n_src, &mut stream_rng(seed, stream_base + 1));
    let (tgt_train, tgt_val) = half_split(n_tgt, &mut stream_rng(seed, stream_base + 2));
    let train_idx: Vec<usize> = src_train
        .iter()
        .copied()
        .chain(tgt_train.iter().map(|&i| i + n_src))
        .collect();
    let val_idx: Vec<usize> = src_val
        .iter()
        .copied()
        .chain(tgt_val.iter().map(|&i| i + n_src))
        .collect();
    let (model, chosen_lambda, validation_losses) =
        holdout_regression(spec, &stacked, &phi, &train_idx, &val_idx, grid)?;
    let mean_source_weight = weights.mean();
    Ok(AcwCateFit {
        model: CateModel::Single { h: model },
        chosen_lambda,
        validation_losses,
        mean_source_weight,
    })
}

/// A fitted separate-regression estimator with per-arm selection traces.
#[derive(Debug, Clone)]
pub struct SrFit {
    pub model: CateModel,
    pub chosen_lambdas: [f64; 2],
    pub losses: [Vec<f64>; 2],
}

/// Separate regression with pseudo-label selection: per-arm candidates on
/// one half, per-arm imputation fits on the other half with the small
/// regularizer `lambda_tilde`, and per-arm selection by mean squared
/// distance to the imputed labels on the target covariates.
pub fn sr_pseudo_label(
    spec: &KernelSpec,
    data: &LabeledDataset,
    target: &UnlabeledDataset,
    grid: &[f64],
    lambda_tilde: f64,
    seed: u64,
) -> Result<SrFit> {
    let (d1, d1p) = split_labeled(data, &mut stream_rng(seed, 0))?;
    sr_parts(spec, &d1, &d1p, target, grid, lambda_tilde)
}

pub fn sr_pseudo_label_crossfit(
    spec: &KernelSpec,
    data: &LabeledDataset,
    target: &UnlabeledDataset,
    grid: &[f64],
    lambda_tilde: f64,
    seed: u64,
) -> Result<(CateModel, Vec<SrFit>)> {
    let (d1, d1p) = split_labeled(data, &mut stream_rng(seed, 0))?;
    let leg_a = sr_parts(spec, &d1, &d1p, target, grid, lambda_tilde)?;
    let leg_b = sr_parts(spec, &d1p, &d1, target, grid, lambda_tilde)?;
    let model = CateModel::Average {
        members: vec![leg_a.model.clone(), leg_b.model.clone()],
    };
    Ok((model, vec![leg_a, leg_b]))
}

fn sr_parts(
    spec: &KernelSpec,
    d_candidates: &LabeledDataset,
    d_imputation: &LabeledDataset,
    target: &UnlabeledDataset,
    grid: &[f64],
    lambda_tilde: f64,
) -> Result<SrFit> {
    let mut models: Vec<KrrModel> = Vec::with_capacity(2);
    let mut chosen = [0.0; 2];
    let mut losses: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    for arm in [0u8, 1] {
        let (z_arm, y_arm) = d_candidates.arm_rows(arm).ok_or(CokeError::EmptyArm {
            arm,
            split: "SR candidate half (D1)".to_string(),
        })?;
        let candidates =
            fit_grid_scaled(spec, &z_arm, &y_arm, grid, d_candidates.n() as f64)?;
        let imputation = fit_arm(spec, d_imputation, arm, lambda_tilde)
            .map_err(|e| e.with_split("SR imputation half (D1')"))?;
        let labels = imputation.predict(target.covariates())?;
        let arm_losses: Vec<f64> = candidates
            .iter()
            .map(|model| {
                let preds = model.predict(target.covariates())?;
                Ok((&preds - &labels).norm_squared() / labels.len() as f64)
            })
            .collect::<Result<_>>()?;
        let best = argmin(&arm_losses);
        chosen[arm as usize] = grid[best];
        losses[arm as usize] = arm_losses;
        models.push(candidates.into_iter().nth(best).unwrap());
    }
    let f1 = models.pop().unwrap();
    let f0 = models.pop().unwrap();
    Ok(SrFit {
        model: CateModel::Difference { f1, f0 },
        chosen_lambdas: chosen,
        losses: [losses[0].clone(), losses[1].clone()],
    })
}
