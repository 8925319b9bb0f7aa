//! Logistic regression by Newton's method, and the density-ratio model
//! built on it.
//!
//! Used for propensity scores and for source-vs-target classification. The
//! solver maximizes the log-likelihood with a step-halving line search and a
//! `1e-6` ridge on the Hessian for invertibility. If the coefficients blow
//! past `‖β‖ > 1e4` (perfect separation), the fit restarts with the same
//! ridge moved into the objective and the result is flagged.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{CokeError, Result};

const HESSIAN_RIDGE: f64 = 1e-6;
const SEPARATION_NORM: f64 = 1e4;
const GRADIENT_TOL: f64 = 1e-8;
const MAX_ITERATIONS: usize = 100;

/// Fitted logistic model; `coefficients[0]` is the intercept.
#[derive(Debug, Clone)]
pub struct LogisticModel {
    coefficients: DVector<f64>,
}

impl LogisticModel {
    pub fn new(coefficients: DVector<f64>) -> Result<Self> {
        if coefficients.is_empty() || coefficients.iter().any(|v| !v.is_finite()) {
            return Err(CokeError::invalid("logistic coefficients must be finite"));
        }
        Ok(Self { coefficients })
    }

    pub fn coefficients(&self) -> &DVector<f64> {
        &self.coefficients
    }

    /// `P(label = 1 | z)`, kept strictly inside (0, 1).
    pub fn predict_prob(&self, z: &[f64]) -> Result<f64> {
        if z.len() + 1 != self.coefficients.len() {
            return Err(CokeError::invalid(format!(
                "covariate dimension {} does not match {} coefficients",
                z.len(),
                self.coefficients.len()
            )));
        }
        let eta = self.coefficients[0]
            + z.iter()
                .zip(self.coefficients.iter().skip(1))
                .map(|(zi, bi)| zi * bi)
                .sum::<f64>();
        Ok(expit(eta).clamp(1e-12, 1.0 - 1e-12))
    }

    pub fn predict_probs(&self, z: &DMatrix<f64>) -> Result<DVector<f64>> {
        let mut out = DVector::zeros(z.nrows());
        for i in 0..z.nrows() {
            let row: Vec<f64> = z.row(i).iter().copied().collect();
            out[i] = self.predict_prob(&row)?;
        }
        Ok(out)
    }
}

/// A logistic fit plus convergence metadata.
#[derive(Debug, Clone)]
pub struct LogisticFit {
    pub model: LogisticModel,
    /// Gradient sup-norm reached the tolerance within the iteration budget.
    pub converged: bool,
    /// Coefficient norm exceeded the separation threshold at some point;
    /// the returned coefficients solve the ridge-penalized problem.
    pub separation: bool,
    pub iterations: usize,
}

pub fn expit(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `ln(1 + e^x)` without overflow.
fn log1p_exp(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Maximum-likelihood logistic regression of binary `labels` on `z` (an
/// intercept column is implicit). Converges when the log-likelihood gradient
/// has sup-norm at most 1e-8, or gives up after 100 Newton iterations and
/// returns the best iterate.
pub fn logistic_fit(z: &DMatrix<f64>, labels: &[u8]) -> Result<LogisticFit> {
    let n = z.nrows();
    if labels.len() != n {
        return Err(CokeError::invalid(format!(
            "{} labels for {} rows",
            labels.len(),
            n
        )));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(CokeError::invalid("non-finite covariate"));
    }
    if let Some(bad) = labels.iter().find(|&&l| l > 1) {
        return Err(CokeError::invalid(format!("labels must be 0 or 1, got {bad}")));
    }
    let ones = labels.iter().filter(|&&l| l == 1).count();
    if ones == 0 || ones == n {
        return Err(CokeError::invalid(
            "logistic regression needs both classes present",
        ));
    }

    let dim = z.ncols() + 1;
    let y = DVector::from_fn(n, |i, _| labels[i] as f64);
    // Design matrix with the intercept column.
    let x = {
        let mut x = DMatrix::zeros(n, dim);
        for i in 0..n {
            x[(i, 0)] = 1.0;
            for j in 0..z.ncols() {
                x[(i, j + 1)] = z[(i, j)];
            }
        }
        x
    };

    let objective = |beta: &DVector<f64>, ridge: f64| -> f64 {
        let eta = &x * beta;
        let mut ll = 0.0;
        for i in 0..n {
            ll += y[i] * eta[i] - log1p_exp(eta[i]);
        }
        ll - 0.5 * ridge * beta.norm_squared()
    };

    let mut beta = DVector::zeros(dim);
    let mut objective_ridge = 0.0;
    let mut separation = false;
    let mut converged = false;
    let mut best = (beta.clone(), objective(&beta, objective_ridge));
    let mut iterations = 0;

    while iterations < MAX_ITERATIONS {
        let eta = &x * &beta;
        let p = eta.map(expit);
        let mut grad = x.tr_mul(&(&y - &p));
        grad -= objective_ridge * &beta;
        if grad.amax() <= GRADIENT_TOL {
            converged = true;
            break;
        }
        let mut hessian = DMatrix::zeros(dim, dim);
        for i in 0..n {
            let w = p[i] * (1.0 - p[i]);
            for r in 0..dim {
                let xw = x[(i, r)] * w;
                for c in r..dim {
                    hessian[(r, c)] += xw * x[(i, c)];
                }
            }
        }
        for r in 0..dim {
            for c in 0..r {
                hessian[(r, c)] = hessian[(c, r)];
            }
            hessian[(r, r)] += HESSIAN_RIDGE + objective_ridge;
        }
        let step = Cholesky::new(hessian)
            .ok_or_else(|| {
                CokeError::NumericalFailure("singular Hessian in logistic fit".into())
            })?
            .solve(&grad);

        // Step halving: accept the first step that does not decrease the
        // objective beyond rounding noise. Near the optimum the quadratic
        // gain sinks below the log-likelihood's absolute precision, so an
        // exact comparison would reject genuine Newton steps and stall.
        let current = objective(&beta, objective_ridge);
        let slack = 1e-12 * (1.0 + current.abs());
        let mut scale = 1.0;
        let mut candidate = &beta + scale * &step;
        for _ in 0..30 {
            if objective(&candidate, objective_ridge) >= current - slack {
                break;
            }
            scale *= 0.5;
            candidate = &beta + scale * &step;
        }
        beta = candidate;
        iterations += 1;

        let value = objective(&beta, objective_ridge);
        if value > best.1 {
            best = (beta.clone(), value);
        }

        if !separation && beta.norm() > SEPARATION_NORM {
            // Perfect separation: restart against the penalized objective.
            separation = true;
            objective_ridge = HESSIAN_RIDGE;
            beta = DVector::zeros(dim);
            best = (beta.clone(), objective(&beta, objective_ridge));
        }
    }

    let final_beta = if converged { beta } else { best.0 };
    Ok(LogisticFit {
        model: LogisticModel::new(final_beta)?,
        converged,
        separation,
        iterations,
    })
}

/// Covariate density ratio of target over source, estimated from a logistic
/// classification of sample membership:
/// `ω̂(z) = n_S P̂(target | z) / (n_T P̂(source | z))`.
#[derive(Debug, Clone)]
pub struct DensityRatioModel {
    pub logistic: LogisticModel,
    pub n_source: usize,
    pub n_target: usize,
}

impl DensityRatioModel {
    /// Fits the membership classifier on stacked covariates with labels
    /// 0 = source, 1 = target.
    pub fn fit(z_source: &DMatrix<f64>, z_target: &DMatrix<f64>) -> Result<(Self, LogisticFit)> {
        if z_source.ncols() != z_target.ncols() {
            return Err(CokeError::invalid(format!(
                "source dimension {} does not match target dimension {}",
                z_source.ncols(),
                z_target.ncols()
            )));
        }
        let n_s = z_source.nrows();
        let n_t = z_target.nrows();
        let stacked = DMatrix::from_fn(n_s + n_t, z_source.ncols(), |i, j| {
            if i < n_s {
                z_source[(i, j)]
            } else {
                z_target[(i - n_s, j)]
            }
        });
        let labels: Vec<u8> = (0..n_s + n_t).map(|i| u8::from(i >= n_s)).collect();
        let fit = logistic_fit(&stacked, &labels)?;
        Ok((
            Self {
                logistic: fit.model.clone(),
                n_source: n_s,
                n_target: n_t,
            },
            fit,
        ))
    }

    /// `ω̂(z) > 0`. The source-membership probability in the denominator is
    /// floored at 1e-6, which caps the weight on points that look purely
    /// target-like.
    pub fn ratio(&self, z: &[f64]) -> Result<f64> {
        let p = self.logistic.predict_prob(z)?;
        let denom = (1.0 - p).max(1e-6);
        Ok(self.n_source as f64 * p / (self.n_target as f64 * denom))
    }

    pub fn ratios(&self, z: &DMatrix<f64>) -> Result<DVector<f64>> {
        let mut out = DVector::zeros(z.nrows());
        for i in 0..z.nrows() {
            let row: Vec<f64> = z.row(i).iter().copied().collect();
            out[i] = self.ratio(&row)?;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    use crate::rng::stream_rng;

    #[test]
    fn prob_at_zero_coefficients_is_half() {
        let model = LogisticModel::new(DVector::zeros(3)).unwrap();
        assert_eq!(model.predict_prob(&[5.0, -3.0]).unwrap(), 0.5);
    }

    #[test]
    fn balanced_labels_independent_of_covariates() {
        let n = 2000;
        let mut rng = stream_rng(41, 0);
        let z: DMatrix<f64> =
            DMatrix::from_fn(n, 2, |_, _| rng.random_range(-std::f64::consts::PI..std::f64::consts::PI));
        let labels: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
        let fit = logistic_fit(&z, &labels).unwrap();
        assert!(fit.converged);
        let beta = fit.model.coefficients();
        assert!(beta[0].abs() <= 1e-2, "intercept {}", beta[0]);
        assert!(beta[1].abs() <= 0.1 && beta[2].abs() <= 0.1);
    }

    #[test]
    fn recovers_the_generating_slope() {
        let n = 5000;
        let mut rng = stream_rng(42, 0);
        let z: DMatrix<f64> =
            DMatrix::from_fn(n, 2, |_, _| rng.random_range(-std::f64::consts::PI..std::f64::consts::PI));
        let labels: Vec<u8> = (0..n)
            .map(|i| u8::from(rng.random::<f64>() < expit(2.0 * z[(i, 0)])))
            .collect();
        let fit = logistic_fit(&z, &labels).unwrap();
        assert!(fit.converged);
        let slope = fit.model.coefficients()[1];
        assert!((1.8..=2.2).contains(&slope), "slope {slope}");
    }

    #[test]
    fn gradient_norm_meets_tolerance_at_convergence() {
        let n = 600;
        let mut rng = stream_rng(43, 0);
        let z: DMatrix<f64> = DMatrix::from_fn(n, 1, |_, _| rng.random_range(-2.0..2.0));
        let labels: Vec<u8> = (0..n)
            .map(|i| u8::from(rng.random::<f64>() < expit(0.5 - z[(i, 0)])))
            .collect();
        let fit = logistic_fit(&z, &labels).unwrap();
        assert!(fit.converged);
        // Recompute the score at the returned coefficients.
        let beta = fit.model.coefficients();
        let mut grad = [0.0; 2];
        for i in 0..n {
            let p = expit(beta[0] + beta[1] * z[(i, 0)]);
            let r = labels[i] as f64 - p;
            grad[0] += r;
            grad[1] += r * z[(i, 0)];
        }
        assert!(grad[0].abs() <= 1e-8 && grad[1].abs() <= 1e-8, "score {grad:?}");
    }

    #[test]
    fn single_class_is_invalid() {
        let z = DMatrix::from_row_slice(3, 1, &[0.0, 1.0, 2.0]);
        assert!(matches!(
            logistic_fit(&z, &[1, 1, 1]),
            Err(CokeError::InvalidInput(_))
        ));
    }

    #[test]
    fn separable_data_is_flagged_and_stays_finite() {
        // A tiny margin forces the unpenalized iterates past the separation
        // threshold before the likelihood saturates.
        let z = DMatrix::from_fn(40, 1, |i, _| {
            if i < 20 {
                -5e-5 * (1.0 + i as f64 * 0.05)
            } else {
                5e-5 * (1.0 + i as f64 * 0.05)
            }
        });
        let labels: Vec<u8> = (0..40).map(|i| u8::from(i >= 20)).collect();
        let fit = logistic_fit(&z, &labels).unwrap();
        assert!(fit.separation);
        assert!(fit.model.coefficients().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn null_shift_density_ratio_is_near_one() {
        let n = 2000;
        let mut rng = stream_rng(44, 0);
        let mut draw = |count: usize| -> DMatrix<f64> {
            DMatrix::from_fn(count, 2, |_, _| rng.random_range(-1.0..1.0))
        };
        let z_s = draw(n);
        let z_t = draw(n);
        let (model, _) = DensityRatioModel::fit(&z_s, &z_t).unwrap();
        let mean_ratio = model.ratios(&z_s).unwrap().mean();
        assert!((mean_ratio - 1.0).abs() < 0.1, "mean ratio {mean_ratio}");
    }

    #[test]
    fn constant_covariates_give_constant_ratio() {
        let z_s = DMatrix::from_element(30, 1, 2.0);
        let z_t = DMatrix::from_element(10, 1, 2.0);
        let (model, _) = DensityRatioModel::fit(&z_s, &z_t).unwrap();
        let r = model.ratios(&z_s).unwrap();
        let first = r[0];
        assert!(r.iter().all(|&v| (v - first).abs() < 1e-9));
        // p̂ equals the target fraction, so the prior-odds correction makes
        // the ratio one.
        assert!((first - 1.0).abs() < 1e-3, "ratio {first}");
    }
}
