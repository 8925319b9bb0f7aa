//! Real-data diagnostics: density-ratio overlap summaries, effective sample
//! size, efficient-score validation labels, and rank/linear correlations.
//!
//! The efficient score turns a labeled target sample into per-row
//! validation labels for CATE estimators: an inverse-propensity residual
//! plus an imputed contrast, so that its conditional mean is the true
//! effect when the target nuisances are exact. Estimators are then ranked
//! by their Spearman/Pearson correlation with the scores.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::benchmarks::dr_pseudo_outcomes;
use crate::cate::Regressor;
use crate::data::{LabeledDataset, UnlabeledDataset};
use crate::error::{CokeError, Result};
use crate::logistic::{logistic_fit, DensityRatioModel, LogisticFit, LogisticModel};

/// Default propensity clamp inside the efficient score.
pub const SCORE_PROPENSITY_CLIP: f64 = 1e-3;

/// Ridge used by the linear outcome nuisances.
pub const LINEAR_RIDGE: f64 = 1e-6;

/// Ridge-regularized linear regression; `coefficients[0]` is the intercept.
#[derive(Debug, Clone)]
pub struct LinearModel {
    coefficients: DVector<f64>,
}

impl LinearModel {
    pub fn coefficients(&self) -> &DVector<f64> {
        &self.coefficients
    }
}

impl Regressor for LinearModel {
    fn predict(&self, covariates: &DMatrix<f64>) -> Result<DVector<f64>> {
        if covariates.ncols() + 1 != self.coefficients.len() {
            return Err(CokeError::invalid(format!(
                "covariate dimension {} does not match {} coefficients",
                covariates.ncols(),
                self.coefficients.len()
            )));
        }
        let mut out = DVector::from_element(covariates.nrows(), self.coefficients[0]);
        for i in 0..covariates.nrows() {
            for j in 0..covariates.ncols() {
                out[i] += covariates[(i, j)] * self.coefficients[j + 1];
            }
        }
        Ok(out)
    }
}

/// Solves `(XᵀX + ridge·I) β = Xᵀy` with an intercept column in `X`.
pub fn ridge_linear_fit(
    covariates: &DMatrix<f64>,
    responses: &DVector<f64>,
    ridge: f64,
) -> Result<LinearModel> {
    let n = covariates.nrows();
    if n == 0 || responses.len() != n {
        return Err(CokeError::invalid("empty or misaligned regression inputs"));
    }
    let dim = covariates.ncols() + 1;
    let mut xtx = DMatrix::zeros(dim, dim);
    let mut xty = DVector::zeros(dim);
    for i in 0..n {
        let mut row = Vec::with_capacity(dim);
        row.push(1.0);
        row.extend(covariates.row(i).iter().copied());
        for r in 0..dim {
            xty[r] += row[r] * responses[i];
            for c in r..dim {
                xtx[(r, c)] += row[r] * row[c];
            }
        }
    }
    for r in 0..dim {
        for c in 0..r {
            xtx[(r, c)] = xtx[(c, r)];
        }
        xtx[(r, r)] += ridge;
    }
    let beta = Cholesky::new(xtx)
        .ok_or_else(|| CokeError::NumericalFailure("singular ridge system".into()))?
        .solve(&xty);
    Ok(LinearModel { coefficients: beta })
}

/// Density-ratio overlap diagnostic: the fitted ratio model and the
/// `log10 ω̂` values on each sample, ready for histogram export.
#[derive(Debug, Clone)]
pub struct DensityRatioDiag {
    pub model: DensityRatioModel,
    pub fit: LogisticFit,
    pub log10_source: Vec<f64>,
    pub log10_target: Vec<f64>,
}

pub fn density_ratio_diag(
    source: &UnlabeledDataset,
    target: &UnlabeledDataset,
) -> Result<DensityRatioDiag> {
    let (model, fit) = DensityRatioModel::fit(source.covariates(), target.covariates())?;
    let log10_source = model
        .ratios(source.covariates())?
        .iter()
        .map(|r| r.log10())
        .collect();
    let log10_target = model
        .ratios(target.covariates())?
        .iter()
        .map(|r| r.log10())
        .collect();
    Ok(DensityRatioDiag {
        model,
        fit,
        log10_source,
        log10_target,
    })
}

/// Kish effective sample size `(Σw)² / Σw²`; lies in `[1, n]` with the
/// upper end reached exactly by constant weights.
pub fn effective_sample_size(weights: &[f64]) -> Result<f64> {
    if weights.is_empty() {
        return Err(CokeError::invalid("empty weight vector"));
    }
    if weights.iter().any(|&w| w.is_nan() || w <= 0.0 || !w.is_finite()) {
        return Err(CokeError::invalid("weights must be positive and finite"));
    }
    let sum: f64 = weights.iter().sum();
    let sum_sq: f64 = weights.iter().map(|w| w * w).sum();
    Ok(sum * sum / sum_sq)
}

/// Nuisance models for the efficient score, fitted on the labeled target
/// sample: a logistic propensity and per-arm ridge-linear outcome models.
#[derive(Debug, Clone)]
pub struct ScoreNuisances {
    pub propensity: LogisticFit,
    pub f0: LinearModel,
    pub f1: LinearModel,
}

pub fn fit_score_nuisances(labeled_target: &LabeledDataset) -> Result<ScoreNuisances> {
    let propensity = logistic_fit(labeled_target.covariates(), labeled_target.treatments())?;
    let (z0, y0) = labeled_target.arm_rows(0).ok_or(CokeError::EmptyArm {
        arm: 0,
        split: "labeled target".to_string(),
    })?;
    let (z1, y1) = labeled_target.arm_rows(1).ok_or(CokeError::EmptyArm {
        arm: 1,
        split: "labeled target".to_string(),
    })?;
    Ok(ScoreNuisances {
        propensity,
        f0: ridge_linear_fit(&z0, &y0, LINEAR_RIDGE)?,
        f1: ridge_linear_fit(&z1, &y1, LINEAR_RIDGE)?,
    })
}

/// Efficient scores
/// `ŝᵢ = (aᵢ − π̂(zᵢ))/(π̂(1 − π̂)) (yᵢ − f̂_{aᵢ}(zᵢ)) + f̂₁(zᵢ) − f̂₀(zᵢ)`
/// with the propensity clamped to `[clip, 1 − clip]`.
pub fn efficient_score(
    labeled_target: &LabeledDataset,
    propensity: &LogisticModel,
    f0: &impl Regressor,
    f1: &impl Regressor,
    clip: f64,
) -> Result<DVector<f64>> {
    let pi = propensity.predict_probs(labeled_target.covariates())?;
    let f0p = f0.predict(labeled_target.covariates())?;
    let f1p = f1.predict(labeled_target.covariates())?;
    dr_pseudo_outcomes(labeled_target, &pi, &f0p, &f1p, clip)
}

/// Average ranks (1-based); ties share the mean of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end hold a tied block
        let rank = (start + end - 1) as f64 / 2.0 + 1.0;
        for &idx in &order[start..end] {
            ranks[idx] = rank;
        }
        start = end;
    }
    ranks
}

/// Product-moment correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(CokeError::invalid(
            "correlation needs two equally long vectors of length >= 2",
        ));
    }
    let n = x.len() as f64;
    let mean_x = x.iter().sum::<f64>() / n;
    let mean_y = y.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    for i in 0..x.len() {
        let dx = x[i] - mean_x;
        let dy = y[i] - mean_y;
        cov += dx * dy;
        var_x += dx * dx;
        var_y += dy * dy;
    }
    if var_x == 0.0 || var_y == 0.0 {
        return Err(CokeError::Undefined(
            "correlation of a zero-variance vector".into(),
        ));
    }
    Ok(cov / (var_x.sqrt() * var_y.sqrt()))
}

/// Rank correlation: the product-moment correlation of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    pearson(&average_ranks(x), &average_ranks(y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use std::f64::consts::PI;

    use crate::cate::FnModel;
    use crate::rng::stream_rng;
    use crate::simulation::{gen_source, gen_target, SimConfig};

    #[test]
    fn ess_examples() {
        assert_eq!(effective_sample_size(&vec![3.0; 50]).unwrap(), 50.0);
        let nearly_one = effective_sample_size(&[1.0, 1e-12]).unwrap();
        assert!((nearly_one - 1.0).abs() < 1e-10, "ess {nearly_one}");
        let hand = effective_sample_size(&[2.0, 1.0, 1.0]).unwrap();
        assert!((hand - 16.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn ess_rejects_nonpositive_weights() {
        assert!(matches!(
            effective_sample_size(&[1.0, 0.0]),
            Err(CokeError::InvalidInput(_))
        ));
        assert!(matches!(
            effective_sample_size(&[1.0, -2.0]),
            Err(CokeError::InvalidInput(_))
        ));
    }

    #[test]
    fn ess_bounds_on_random_weights() {
        let mut rng = stream_rng(61, 0);
        for _ in 0..50 {
            let n = rng.random_range(2..40);
            let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..5.0)).collect();
            let ess = effective_sample_size(&w).unwrap();
            assert!(ess >= 1.0 && ess <= n as f64 + 1e-12);
        }
        // Equality at the top happens only for constant weights.
        let ess = effective_sample_size(&vec![0.7; 9]).unwrap();
        assert!((ess - 9.0).abs() < 1e-12);
    }

    #[test]
    fn correlation_examples() {
        let x = [1.0, 2.0, 3.0];
        assert!((pearson(&x, &x).unwrap() - 1.0).abs() <= 1e-15);
        assert!((spearman(&x, &x).unwrap() - 1.0).abs() <= 1e-15);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson(&x, &neg).unwrap() + 1.0).abs() <= 1e-15);
        assert!((spearman(&x, &neg).unwrap() + 1.0).abs() <= 1e-15);
        let y = [1.0, 3.0, 2.0];
        assert!((spearman(&x, &y).unwrap() - 0.5).abs() <= 1e-15);
    }

    #[test]
    fn zero_variance_is_undefined() {
        assert!(matches!(
            pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(CokeError::Undefined(_))
        ));
    }

    #[test]
    fn spearman_is_invariant_under_monotone_transforms() {
        let mut rng = stream_rng(62, 0);
        for _ in 0..20 {
            let n = rng.random_range(3..12);
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let y: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let base = spearman(&x, &y).unwrap();
            let x_t: Vec<f64> = x.iter().map(|&v| v.exp()).collect();
            let y_t: Vec<f64> = y.iter().map(|&v| v * v * v + 2.0).collect();
            assert_eq!(spearman(&x_t, &y).unwrap(), base);
            assert_eq!(spearman(&x, &y_t).unwrap(), base);
        }
    }

    #[test]
    fn average_ranks_handle_ties() {
        let ranks = average_ranks(&[2.0, 1.0, 2.0, 5.0]);
        assert_eq!(ranks, vec![2.5, 1.0, 2.5, 4.0]);
    }

    #[test]
    fn ridge_linear_recovers_a_line() {
        let z = DMatrix::from_fn(50, 1, |i, _| i as f64 / 10.0);
        let y = DVector::from_fn(50, |i, _| 2.0 + 3.0 * z[(i, 0)]);
        let model = ridge_linear_fit(&z, &y, 1e-6).unwrap();
        assert!((model.coefficients()[0] - 2.0).abs() < 1e-4);
        assert!((model.coefficients()[1] - 3.0).abs() < 1e-4);
    }

    #[test]
    fn score_formula_arithmetic() {
        // π̂ = 0.5, both outcome models zero, a = 0, y = 1: ŝ = −2.
        let z = DMatrix::from_row_slice(1, 1, &[0.0]);
        let d = LabeledDataset::new(z, vec![0], DVector::from_vec(vec![1.0])).unwrap();
        let propensity = LogisticModel::new(DVector::zeros(2)).unwrap();
        let zero = FnModel(|_: &[f64]| 0.0);
        let s = efficient_score(&d, &propensity, &zero, &zero, 1e-3).unwrap();
        assert_eq!(s[0], -2.0);
    }

    #[test]
    fn score_reduces_to_contrast_on_zero_residual() {
        let z = DMatrix::from_row_slice(2, 1, &[0.5, -0.5]);
        let f0 = FnModel(|z: &[f64]| z[0]);
        let f1 = FnModel(|z: &[f64]| 2.0 * z[0]);
        // outcomes equal to f_a(z): residual term vanishes.
        let d = LabeledDataset::new(z.clone(), vec![1, 0], DVector::from_vec(vec![1.0, -0.5]))
            .unwrap();
        let propensity = LogisticModel::new(DVector::zeros(2)).unwrap();
        let s = efficient_score(&d, &propensity, &f0, &f1, 1e-3).unwrap();
        assert!((s[0] - 0.5).abs() < 1e-15);
        assert!((s[1] - (-0.5)).abs() < 1e-15);
    }

    #[test]
    fn identical_samples_have_log_ratios_near_zero() {
        let n = 2000;
        let mut rng = stream_rng(63, 0);
        let z: DMatrix<f64> = DMatrix::from_fn(n, 2, |_, _| rng.random_range(-PI..PI));
        let source = UnlabeledDataset::new(z.clone()).unwrap();
        let zt: DMatrix<f64> = DMatrix::from_fn(n, 2, |_, _| rng.random_range(-PI..PI));
        let target = UnlabeledDataset::new(zt).unwrap();
        let diag = density_ratio_diag(&source, &target).unwrap();
        let mean_abs: f64 =
            diag.log10_source.iter().map(|v| v.abs()).sum::<f64>() / n as f64;
        assert!(mean_abs <= 0.1, "mean |log10 ratio| = {mean_abs}");
    }

    #[test]
    fn shifted_samples_separate_in_log_ratio() {
        let cfg = SimConfig {
            n: 1500,
            n_t: 1500,
            noise_sd: 0.0,
            ..SimConfig::desk_default()
        };
        let source_z = gen_source(&cfg, &mut stream_rng(64, 0))
            .unwrap()
            .covariates()
            .clone();
        let source = UnlabeledDataset::new(source_z).unwrap();
        let target_data = gen_target(&cfg, &mut stream_rng(64, 1)).unwrap();
        let diag = density_ratio_diag(&source, &target_data).unwrap();
        let mean_source: f64 =
            diag.log10_source.iter().sum::<f64>() / diag.log10_source.len() as f64;
        let mean_target: f64 =
            diag.log10_target.iter().sum::<f64>() / diag.log10_target.len() as f64;
        assert!(
            mean_source < 0.0 && 0.0 < mean_target,
            "means: source {mean_source}, target {mean_target}"
        );
    }
}
