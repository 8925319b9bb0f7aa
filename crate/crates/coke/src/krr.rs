//! Kernel ridge regression in dual form.
//!
//! A fit solves `(K + N·λ·I) α = r` where `K` is the Gram matrix of the
//! training covariates, `N` the sample size entering the empirical loss, and
//! returns the function `f̂(u) = Σᵢ αᵢ K(zᵢ, u)`. This is the closed form of
//! the penalized least-squares program
//! `min_f (1/N) Σᵢ (rᵢ − f(zᵢ))² + λ ‖f‖²_F` over the RKHS of the kernel.
//!
//! Arm-indicator fits ([`fit_arm`]) restrict the loss to one treatment arm
//! while keeping the `1/N` normalization of the full split, so their dual
//! system uses the arm's Gram matrix but the full split size in the ridge
//! term. Grid fits ([`fit_grid`]) reuse a single symmetric eigendecomposition
//! of `K` across all regularizers.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use crate::data::LabeledDataset;
use crate::error::{CokeError, Result};
use crate::kernel::{matrix_rows, KernelSpec};

/// A fitted kernel ridge regression: support points, dual weights, kernel.
#[derive(Debug, Clone)]
pub struct KrrModel {
    support: DMatrix<f64>,
    dual_weights: DVector<f64>,
    spec: KernelSpec,
}

impl KrrModel {
    /// Assembles a model from parts, validating the representation
    /// invariants. Used by deserialization and tests; fits go through
    /// [`fit`] and friends.
    pub fn new(spec: KernelSpec, support: DMatrix<f64>, dual_weights: DVector<f64>) -> Result<Self> {
        if support.nrows() == 0 {
            return Err(CokeError::invalid("model support is empty"));
        }
        if dual_weights.len() != support.nrows() {
            return Err(CokeError::invalid(format!(
                "{} dual weights for {} support points",
                dual_weights.len(),
                support.nrows()
            )));
        }
        if support.iter().any(|v| !v.is_finite()) || dual_weights.iter().any(|v| !v.is_finite()) {
            return Err(CokeError::invalid("non-finite value in model"));
        }
        Ok(Self {
            support,
            dual_weights,
            spec,
        })
    }

    pub fn support(&self) -> &DMatrix<f64> {
        &self.support
    }

    pub fn dual_weights(&self) -> &DVector<f64> {
        &self.dual_weights
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn support_size(&self) -> usize {
        self.support.nrows()
    }

    pub fn dim(&self) -> usize {
        self.support.ncols()
    }

    /// Predictions `gram(Z_new, support) · α` for a batch of covariate rows.
    pub fn predict(&self, covariates: &DMatrix<f64>) -> Result<DVector<f64>> {
        if covariates.ncols() != self.support.ncols() {
            return Err(CokeError::invalid(format!(
                "prediction dimension {} does not match support dimension {}",
                covariates.ncols(),
                self.support.ncols()
            )));
        }
        let support_rows = matrix_rows(&self.support);
        let new_rows = matrix_rows(covariates);
        let alpha = self.dual_weights.as_slice();
        let out: Vec<f64> = new_rows
            .par_iter()
            .map(|row| {
                let k = self.spec.eval_against(row, &support_rows);
                k.iter().zip(alpha).map(|(kv, av)| kv * av).sum()
            })
            .collect();
        Ok(DVector::from_vec(out))
    }

    /// Squared RKHS norm of the represented function, `αᵀ K_supp α`.
    pub fn rkhs_norm_sq(&self) -> Result<f64> {
        let k = self.spec.gram_sym(&self.support)?;
        Ok(self.dual_weights.dot(&(&k * &self.dual_weights)))
    }
}

/// Full-sample fit: `α` solves `(K + N·λ·I) α = r`.
pub fn fit(
    spec: &KernelSpec,
    covariates: &DMatrix<f64>,
    responses: &DVector<f64>,
    lambda: f64,
) -> Result<KrrModel> {
    let n = covariates.nrows();
    if n == 0 {
        return Err(CokeError::invalid("cannot fit on zero rows"));
    }
    if responses.len() != n {
        return Err(CokeError::invalid(format!(
            "{} responses for {} rows",
            responses.len(),
            n
        )));
    }
    validate_fit_inputs(covariates, responses, lambda)?;
    let k = spec.gram_sym(covariates)?;
    let alpha = solve_dual(&k, n as f64 * lambda, responses)?;
    KrrModel::new(spec.clone(), covariates.clone(), alpha)
}

/// Arm-indicator fit: minimizes `(1/n) Σᵢ (yᵢ − f(zᵢ))² 1(aᵢ = arm) + λ ‖f‖²`
/// over the whole split of size `n`, which reduces to a fit on the arm's
/// rows with dual system `(K_arm + n·λ·I) α = y_arm`. The ridge term scales
/// with the full split size, not the arm size.
pub fn fit_arm(
    spec: &KernelSpec,
    data: &LabeledDataset,
    arm: u8,
    lambda: f64,
) -> Result<KrrModel> {
    let (z_arm, y_arm) = data.arm_rows(arm).ok_or(CokeError::EmptyArm {
        arm,
        split: "dataset".to_string(),
    })?;
    validate_fit_inputs(&z_arm, &y_arm, lambda)?;
    let k = spec.gram_sym(&z_arm)?;
    let alpha = solve_dual(&k, data.n() as f64 * lambda, &y_arm)?;
    KrrModel::new(spec.clone(), z_arm, alpha)
}

/// Fits one model per regularizer, reusing a single symmetric
/// eigendecomposition `K = QΛQᵀ`: `α(λ) = Q (Λ + N·λ·I)⁻¹ Qᵀ r`.
///
/// Element `k` agrees with `fit(spec, covariates, responses, lambdas[k])` to
/// within 1e-8 in the dual weights.
pub fn fit_grid(
    spec: &KernelSpec,
    covariates: &DMatrix<f64>,
    responses: &DVector<f64>,
    lambdas: &[f64],
) -> Result<Vec<KrrModel>> {
    fit_grid_scaled(spec, covariates, responses, lambdas, covariates.nrows() as f64)
}

/// [`fit_grid`] with an explicit loss normalization `n_loss`, so callers can
/// sweep arm-indicator fits (where the ridge scales with the full split
/// size) over a grid without refactorizing.
pub fn fit_grid_scaled(
    spec: &KernelSpec,
    covariates: &DMatrix<f64>,
    responses: &DVector<f64>,
    lambdas: &[f64],
    n_loss: f64,
) -> Result<Vec<KrrModel>> {
    if lambdas.is_empty() {
        return Err(CokeError::invalid("empty regularizer grid"));
    }
    for &l in lambdas {
        if !(l.is_finite() && l > 0.0) {
            return Err(CokeError::invalid(format!("regularizer must be positive, got {l}")));
        }
    }
    if covariates.nrows() == 0 {
        return Err(CokeError::invalid("cannot fit on zero rows"));
    }
    if responses.len() != covariates.nrows() {
        return Err(CokeError::invalid(format!(
            "{} responses for {} rows",
            responses.len(),
            covariates.nrows()
        )));
    }
    validate_fit_inputs(covariates, responses, lambdas[0])?;
    let k = spec.gram_sym(covariates)?;
    let eig = SymmetricEigen::new(k);
    let qt_r = eig.eigenvectors.tr_mul(responses);
    lambdas
        .par_iter()
        .map(|&lambda| {
            let ridge = n_loss * lambda;
            let mut scaled = qt_r.clone();
            for (coef, ev) in scaled.iter_mut().zip(eig.eigenvalues.iter()) {
                let denom = ev + ridge;
                if denom <= 0.0 {
                    return Err(CokeError::NumericalFailure(format!(
                        "nonpositive shifted eigenvalue {denom} in grid fit"
                    )));
                }
                *coef /= denom;
            }
            let alpha = &eig.eigenvectors * scaled;
            KrrModel::new(spec.clone(), covariates.clone(), alpha)
        })
        .collect()
}

fn validate_fit_inputs(
    covariates: &DMatrix<f64>,
    responses: &DVector<f64>,
    lambda: f64,
) -> Result<()> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(CokeError::invalid(format!(
            "regularizer must be positive, got {lambda}"
        )));
    }
    if covariates.iter().any(|v| !v.is_finite()) || responses.iter().any(|v| !v.is_finite()) {
        return Err(CokeError::invalid("non-finite value in fit inputs"));
    }
    Ok(())
}

/// Solves `(K + ridge·I + jitter·I) α = rhs` by Cholesky factorization.
/// On failure the jitter starts at `1e-12 · trace(K)/n` and escalates by
/// factors of 10 up to `1e-6 · trace(K)/n`.
fn solve_dual(k: &DMatrix<f64>, ridge: f64, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let n = k.nrows();
    let trace_avg = k.trace() / n as f64;
    let max_jitter = 1e-6 * trace_avg;
    let mut jitter = 0.0;
    loop {
        let mut m = k.clone();
        for i in 0..n {
            m[(i, i)] += ridge + jitter;
        }
        if let Some(chol) = Cholesky::new(m) {
            return Ok(chol.solve(rhs));
        }
        jitter = if jitter == 0.0 {
            1e-12 * trace_avg
        } else {
            jitter * 10.0
        };
        if jitter.is_nan() || jitter <= 0.0 || jitter > max_jitter {
            return Err(CokeError::NumericalFailure(format!(
                "Cholesky factorization failed at ridge {ridge} after jitter escalation"
            )));
        }
    }
}
