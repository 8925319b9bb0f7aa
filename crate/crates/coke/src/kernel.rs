//! Kernel evaluation and Gram-matrix construction.
//!
//! Every regression in this crate is a kernel ridge regression, so all of
//! them funnel through [`KernelSpec`]: pointwise evaluation, dense Gram
//! matrices, and the supremum bound `ξ = sup_z K(z, z)` that calibrates the
//! default regularizers.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CokeError, Result};

/// A positive semidefinite kernel with fixed parameters.
///
/// The built-in families are stationary: `K(z, w)` depends only on the
/// Euclidean distance `‖z − w‖₂`, so `K(z, z)` is a constant and equals the
/// supremum bound. Gram matrices are dense, double precision; no sparsity or
/// low-rank structure is assumed anywhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum KernelSpec {
    /// Exponentially decaying kernel
    /// `K(z, w) = amplitude · 4/(√π ρ) · exp(−2√2 ‖z − w‖₂ / ρ)`.
    ///
    /// The constants are fixed by the family rather than exposed as a general
    /// smoothness parameter; `rho` is the length scale in covariate units.
    MaternExp { rho: f64, amplitude: f64 },
    /// Gaussian kernel `K(z, w) = amplitude · exp(−‖z − w‖² / (2ρ²))`.
    Gaussian { rho: f64, amplitude: f64 },
    /// Stationary kernel tabulated as (distance, value) knots with linear
    /// interpolation between them; outside the table the endpoint values are
    /// held constant. `bound` declares `sup_z K(z, z)`; without it,
    /// [`KernelSpec::sup_bound`] is unsupported.
    CustomTable {
        distances: Vec<f64>,
        values: Vec<f64>,
        bound: Option<f64>,
    },
}

impl KernelSpec {
    /// Exponential-family kernel with unit amplitude.
    pub fn matern_exp(rho: f64) -> Result<Self> {
        Self::validate_scale(rho, 1.0)?;
        Ok(KernelSpec::MaternExp {
            rho,
            amplitude: 1.0,
        })
    }

    /// Gaussian kernel with unit amplitude.
    pub fn gaussian(rho: f64) -> Result<Self> {
        Self::validate_scale(rho, 1.0)?;
        Ok(KernelSpec::Gaussian {
            rho,
            amplitude: 1.0,
        })
    }

    /// Tabulated stationary kernel. `knots` must be sorted by strictly
    /// increasing nonnegative distance.
    pub fn custom_table(knots: &[(f64, f64)], bound: Option<f64>) -> Result<Self> {
        if knots.is_empty() {
            return Err(CokeError::invalid("custom kernel table is empty"));
        }
        for &(d, v) in knots {
            if !d.is_finite() || !v.is_finite() || d < 0.0 {
                return Err(CokeError::invalid(
                    "custom kernel table entries must be finite, distances nonnegative",
                ));
            }
        }
        for window in knots.windows(2) {
            if window[1].0 <= window[0].0 {
                return Err(CokeError::invalid(
                    "custom kernel table distances must be strictly increasing",
                ));
            }
        }
        Ok(KernelSpec::CustomTable {
            distances: knots.iter().map(|k| k.0).collect(),
            values: knots.iter().map(|k| k.1).collect(),
            bound,
        })
    }

    fn validate_scale(rho: f64, amplitude: f64) -> Result<()> {
        if !(rho.is_finite() && rho > 0.0) {
            return Err(CokeError::invalid(format!("kernel scale must be positive, got {rho}")));
        }
        if !(amplitude.is_finite() && amplitude > 0.0) {
            return Err(CokeError::invalid(format!(
                "kernel amplitude must be positive, got {amplitude}"
            )));
        }
        Ok(())
    }

    /// Replaces the amplitude of a built-in family.
    pub fn with_amplitude(self, amplitude: f64) -> Result<Self> {
        match self {
            KernelSpec::MaternExp { rho, .. } => {
                Self::validate_scale(rho, amplitude)?;
                Ok(KernelSpec::MaternExp { rho, amplitude })
            }
            KernelSpec::Gaussian { rho, .. } => {
                Self::validate_scale(rho, amplitude)?;
                Ok(KernelSpec::Gaussian { rho, amplitude })
            }
            KernelSpec::CustomTable { .. } => Err(CokeError::Unsupported(
                "amplitude only applies to built-in families".into(),
            )),
        }
    }

    /// Evaluates `K(z, w)`. Symmetric in its arguments by construction: both
    /// orders run the same distance computation.
    pub fn eval(&self, z: &[f64], w: &[f64]) -> Result<f64> {
        if z.len() != w.len() {
            return Err(CokeError::invalid(format!(
                "covariate dimension mismatch: {} vs {}",
                z.len(),
                w.len()
            )));
        }
        Ok(self.eval_dist(euclidean(z, w)))
    }

    /// Kernel value at a given Euclidean distance.
    fn eval_dist(&self, dist: f64) -> f64 {
        match self {
            KernelSpec::MaternExp { rho, amplitude } => {
                amplitude * 4.0 / (std::f64::consts::PI.sqrt() * rho)
                    * (-2.0 * std::f64::consts::SQRT_2 * dist / rho).exp()
            }
            KernelSpec::Gaussian { rho, amplitude } => {
                amplitude * (-dist * dist / (2.0 * rho * rho)).exp()
            }
            KernelSpec::CustomTable {
                distances, values, ..
            } => interpolate(distances, values, dist),
        }
    }

    /// The supremum bound `ξ = sup_z K(z, z)`.
    ///
    /// Built-in families are stationary, so this is `K(z, z)` at any point.
    /// A tabulated kernel must declare its bound explicitly.
    pub fn sup_bound(&self) -> Result<f64> {
        match self {
            KernelSpec::MaternExp { .. } | KernelSpec::Gaussian { .. } => Ok(self.eval_dist(0.0)),
            KernelSpec::CustomTable { bound, .. } => bound.ok_or_else(|| {
                CokeError::Unsupported(
                    "tabulated kernel has no declared supremum bound".into(),
                )
            }),
        }
    }

    /// Cross Gram matrix: entry `(i, j) = K(rows_i, cols_j)`.
    pub fn gram(&self, rows: &DMatrix<f64>, cols: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if rows.ncols() != cols.ncols() {
            return Err(CokeError::invalid(format!(
                "covariate dimension mismatch: {} vs {}",
                rows.ncols(),
                cols.ncols()
            )));
        }
        if std::ptr::eq(rows, cols) {
            return self.gram_sym(rows);
        }
        let a = matrix_rows(rows);
        let b = matrix_rows(cols);
        let n = a.len();
        let m = b.len();
        let mut data = vec![0.0; n * m];
        data.par_chunks_mut(m).enumerate().for_each(|(i, out)| {
            for (j, slot) in out.iter_mut().enumerate() {
                *slot = self.eval_dist(euclidean(&a[i], &b[j]));
            }
        });
        Ok(DMatrix::from_row_iterator(n, m, data))
    }

    /// Symmetric Gram matrix of one point set. The upper triangle is computed
    /// once and mirrored, so the result is symmetric to the last bit and
    /// independent of how the row blocks were scheduled.
    pub fn gram_sym(&self, points: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let rows = matrix_rows(points);
        let n = rows.len();
        let mut data = vec![0.0; n * n];
        data.par_chunks_mut(n).enumerate().for_each(|(i, out)| {
            for (j, slot) in out.iter_mut().enumerate().skip(i) {
                *slot = self.eval_dist(euclidean(&rows[i], &rows[j]));
            }
        });
        for i in 0..n {
            for j in 0..i {
                data[i * n + j] = data[j * n + i];
            }
        }
        Ok(DMatrix::from_row_iterator(n, n, data))
    }

    /// Kernel values between one point and a list of points.
    pub(crate) fn eval_against(&self, point: &[f64], others: &[Vec<f64>]) -> Vec<f64> {
        others
            .iter()
            .map(|w| self.eval_dist(euclidean(point, w)))
            .collect()
    }
}

/// Copies the rows of a (column-major) matrix into contiguous slices.
pub(crate) fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

fn euclidean(z: &[f64], w: &[f64]) -> f64 {
    z.iter()
        .zip(w)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// Piecewise-linear interpolation clamped to the endpoint values.
fn interpolate(distances: &[f64], values: &[f64], d: f64) -> f64 {
    if d <= distances[0] {
        return values[0];
    }
    if d >= *distances.last().unwrap() {
        return *values.last().unwrap();
    }
    let hi = distances.partition_point(|&x| x < d);
    let lo = hi - 1;
    let t = (d - distances[lo]) / (distances[hi] - distances[lo]);
    values[lo] + t * (values[hi] - values[lo])
}
