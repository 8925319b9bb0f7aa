//! End-to-end estimation: split, candidate grid, selection, cross-fitting.
//!
//! `run` splits the labeled source data in half with a seeded shuffle,
//! builds one regression-adjustment candidate per grid value on the first
//! half (sharing the nuisance fits and the Gram factorization), imputes
//! target outcomes with a lightly regularized difference model on the second
//! half, and selects the candidate with minimal imputed loss.
//! `run_crossfit` repeats the procedure with the two halves swapped and
//! averages the selected models.

use crate::cate::{ra_learner_grid, CateModel, RegularizerTriple};
use crate::data::{LabeledDataset, UnlabeledDataset};
use crate::error::{CokeError, Result};
use crate::kernel::KernelSpec;
use crate::rng;
use crate::selection::{select, build_imputation, Candidate, SelectionReport};

/// How the second-stage regularizer grid is constructed.
///
/// * `Theory`: `{2^k · ξ log n / n : k = 0..q}` with `q = ⌈2 log n⌉`
///   (natural log), and first-stage regularizers `ξ log n / n`.
/// * `Experiment`: `{2^k / (5n) : k = 0..⌈log₂(5n)⌉}` with first-stage
///   regularizers `1/(5n)`; the setting used throughout the simulations.
/// * `Explicit`: a user-supplied strictly increasing grid.
#[derive(Debug, Clone, PartialEq)]
pub enum GridMode {
    Theory,
    Experiment,
    Explicit { values: Vec<f64> },
}

/// Builds the regularizer grid for a source sample of size `n` with kernel
/// bound `xi`. `q_override` replaces the theory-mode exponent `⌈2 log n⌉`;
/// the other modes ignore it.
pub fn build_grid(
    mode: &GridMode,
    n: usize,
    xi: f64,
    q_override: Option<usize>,
) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(CokeError::invalid(format!(
            "grid construction needs n >= 2, got {n}"
        )));
    }
    match mode {
        GridMode::Theory => {
            let base = xi * (n as f64).ln() / n as f64;
            if !(base.is_finite() && base > 0.0) {
                return Err(CokeError::invalid(format!("bad grid base {base}")));
            }
            let q = q_override.unwrap_or((2.0 * (n as f64).ln()).ceil() as usize);
            Ok((0..=q).map(|k| base * 2f64.powi(k as i32)).collect())
        }
        GridMode::Experiment => {
            let base = 1.0 / (5.0 * n as f64);
            let q = (5.0 * n as f64).log2().ceil() as usize;
            Ok((0..=q).map(|k| base * 2f64.powi(k as i32)).collect())
        }
        GridMode::Explicit { values } => {
            if values.is_empty() {
                return Err(CokeError::invalid("explicit grid is empty"));
            }
            if values.iter().any(|v| !v.is_finite() || *v <= 0.0) {
                return Err(CokeError::invalid(
                    "explicit grid values must be positive and finite",
                ));
            }
            for pair in values.windows(2) {
                if pair[1] <= pair[0] {
                    return Err(CokeError::invalid(
                        "explicit grid must be strictly increasing",
                    ));
                }
            }
            Ok(values.clone())
        }
    }
}

/// Configuration of one pipeline run.
#[derive(Debug, Clone)]
pub struct CokeConfig {
    pub kernel: KernelSpec,
    pub grid_mode: GridMode,
    /// Replaces the theory-mode grid exponent `⌈2 log n⌉`.
    pub q_override: Option<usize>,
    /// First-stage nuisance regularizers `(λ00, λ01)`; defaults to the grid
    /// mode's base value.
    pub lambda_first: Option<(f64, f64)>,
    /// Imputation regularizers `(λ̃0, λ̃1)`; defaults to `ξ log n / n` in
    /// theory mode and `1/(5n)` in experiment mode.
    pub lambda_imputation: Option<(f64, f64)>,
    /// Keys the half split. The split is reproducible across runs and
    /// machines: ChaCha8 seeded with `split_seed`, stream 0, Fisher-Yates.
    pub split_seed: u64,
    pub crossfit: bool,
}

impl CokeConfig {
    pub fn new(kernel: KernelSpec) -> Self {
        Self {
            kernel,
            grid_mode: GridMode::Experiment,
            q_override: None,
            lambda_first: None,
            lambda_imputation: None,
            split_seed: 0,
            crossfit: false,
        }
    }

    /// Mode-default regularizer for the first-stage and imputation fits.
    /// Explicit grids fall back to the theory value.
    fn base_lambda(&self, n: usize, xi: f64) -> f64 {
        match self.grid_mode {
            GridMode::Experiment => 1.0 / (5.0 * n as f64),
            GridMode::Theory | GridMode::Explicit { .. } => xi * (n as f64).ln() / n as f64,
        }
    }

    fn first_stage_lambdas(&self, n: usize, xi: f64) -> (f64, f64) {
        self.lambda_first
            .unwrap_or_else(|| (self.base_lambda(n, xi), self.base_lambda(n, xi)))
    }

    fn imputation_lambdas(&self, n: usize, xi: f64) -> (f64, f64) {
        self.lambda_imputation
            .unwrap_or_else(|| (self.base_lambda(n, xi), self.base_lambda(n, xi)))
    }
}

/// Everything produced by one (non-cross-fitted) pipeline run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub model: CateModel,
    pub report: SelectionReport,
    pub candidates: Vec<Candidate>,
    pub grid: Vec<f64>,
    pub d1_indices: Vec<usize>,
    pub d2_indices: Vec<usize>,
}

/// A cross-fitted run: the averaged model plus the two legs.
#[derive(Debug, Clone)]
pub struct CrossfitOutput {
    pub model: CateModel,
    pub legs: Vec<RunOutput>,
}

/// Seeded half split of the source data: `(D1, D2)` of sizes
/// `⌈n/2⌉` and `⌊n/2⌋`.
pub fn split_source(
    data: &LabeledDataset,
    split_seed: u64,
) -> Result<(LabeledDataset, LabeledDataset, Vec<usize>, Vec<usize>)> {
    let mut rng = rng::stream_rng(split_seed, 0);
    let (idx1, idx2) = rng::half_split(data.n(), &mut rng);
    if idx1.is_empty() || idx2.is_empty() {
        return Err(CokeError::invalid(format!(
            "cannot half-split {} rows",
            data.n()
        )));
    }
    let d1 = data.subset(&idx1)?;
    let d2 = data.subset(&idx2)?;
    Ok((d1, d2, idx1, idx2))
}

/// One pipeline run: candidates fitted on `D1`, selected against imputed
/// outcomes from `D2` on the target covariates.
pub fn run(
    cfg: &CokeConfig,
    data: &LabeledDataset,
    target: &UnlabeledDataset,
) -> Result<RunOutput> {
    let (d1, d2, idx1, idx2) = split_source(data, cfg.split_seed)?;
    run_with_parts(cfg, &d1, &d2, target, data.n(), idx1, idx2)
}

fn run_with_parts(
    cfg: &CokeConfig,
    train: &LabeledDataset,
    holdout: &LabeledDataset,
    target: &UnlabeledDataset,
    n_full: usize,
    train_indices: Vec<usize>,
    holdout_indices: Vec<usize>,
) -> Result<RunOutput> {
    if target.dim() != train.dim() {
        return Err(CokeError::invalid(format!(
            "target dimension {} does not match source dimension {}",
            target.dim(),
            train.dim()
        )));
    }
    let xi = cfg.kernel.sup_bound()?;
    let grid = build_grid(&cfg.grid_mode, n_full, xi, cfg.q_override)?;
    let (lambda00, lambda01) = cfg.first_stage_lambdas(n_full, xi);
    let fitgrid = ra_learner_grid(&cfg.kernel, train, lambda00, lambda01, &grid)
        .map_err(|e| e.with_split("first split (D1)"))?;
    let candidates: Vec<Candidate> = fitgrid
        .candidates
        .into_iter()
        .zip(&grid)
        .map(|(model, &lambda1)| {
            Ok(Candidate {
                lambdas: RegularizerTriple::new(lambda00, lambda01, lambda1)?,
                model,
            })
        })
        .collect::<Result<_>>()?;
    let (lt0, lt1) = cfg.imputation_lambdas(n_full, xi);
    let imputation = build_imputation(&cfg.kernel, holdout, lt0, lt1)
        .map_err(|e| e.with_split("second split (D2)"))?;
    let report = select(&candidates, &imputation, target)?;
    let model = candidates[report.chosen_index].model.clone();
    Ok(RunOutput {
        model,
        report,
        candidates,
        grid,
        d1_indices: train_indices,
        d2_indices: holdout_indices,
    })
}

/// Cross-fitted run: the split roles are swapped between two legs and the
/// two selected models are averaged with equal weights. Both legs use the
/// grid derived from the full sample size.
pub fn run_crossfit(
    cfg: &CokeConfig,
    data: &LabeledDataset,
    target: &UnlabeledDataset,
) -> Result<CrossfitOutput> {
    let (d1, d2, idx1, idx2) = split_source(data, cfg.split_seed)?;
    let (leg_a, leg_b) = rayon::join(
        || run_with_parts(cfg, &d1, &d2, target, data.n(), idx1.clone(), idx2.clone()),
        || run_with_parts(cfg, &d2, &d1, target, data.n(), idx2.clone(), idx1.clone()),
    );
    let (leg_a, leg_b) = (leg_a?, leg_b?);
    let model = CateModel::Average {
        members: vec![leg_a.model.clone(), leg_b.model.clone()],
    };
    Ok(CrossfitOutput {
        model,
        legs: vec![leg_a, leg_b],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::Rng;

    use crate::cate::ra_learner;
    use crate::rng::stream_rng;

    fn synthetic(n: usize, seed: u64) -> (LabeledDataset, UnlabeledDataset) {
        let mut rng = stream_rng(seed, 9);
        let z: DMatrix<f64> = DMatrix::from_fn(n, 2, |_, _| rng.random_range(-3.0..3.0));
        let a: Vec<u8> = (0..n).map(|_| rng.random_range(0..2) as u8).collect();
        let y = DVector::from_fn(n, |i, _| {
            z[(i, 0)].abs() + (a[i] as f64 - 0.5) * z[(i, 0)].sin()
                + 0.1 * rng.random_range(-1.0..1.0)
        });
        let d = LabeledDataset::new(z, a, y).unwrap();
        let zt: DMatrix<f64> = DMatrix::from_fn(n / 2, 2, |_, _| rng.random_range(-3.0..3.0));
        (d, UnlabeledDataset::new(zt).unwrap())
    }

    #[test]
    fn experiment_grid_for_n_100() {
        let grid = build_grid(&GridMode::Experiment, 100, 0.0, None).unwrap();
        assert_eq!(grid.len(), 10);
        assert_eq!(grid[0], 1.0 / 500.0);
        assert_eq!(*grid.last().unwrap(), 512.0 / 500.0);
        for pair in grid.windows(2) {
            assert_eq!(pair[1], 2.0 * pair[0]);
        }
    }

    #[test]
    fn theory_grid_for_n_100() {
        let xi = KernelSpec::matern_exp(5.0).unwrap().sup_bound().unwrap();
        let grid = build_grid(&GridMode::Theory, 100, xi, None).unwrap();
        assert_eq!(grid.len(), 11);
        assert!((grid[0] - 0.020786).abs() < 1e-6);
        let overridden = build_grid(&GridMode::Theory, 100, xi, Some(3)).unwrap();
        assert_eq!(overridden.len(), 4);
    }

    #[test]
    fn explicit_grid_is_returned_verbatim() {
        let grid = build_grid(
            &GridMode::Explicit {
                values: vec![0.1, 0.2],
            },
            100,
            1.0,
            None,
        )
        .unwrap();
        assert_eq!(grid, vec![0.1, 0.2]);
    }

    #[test]
    fn grid_rejects_degenerate_inputs() {
        assert!(build_grid(&GridMode::Experiment, 1, 1.0, None).is_err());
        assert!(build_grid(
            &GridMode::Explicit {
                values: vec![0.2, 0.1]
            },
            10,
            1.0,
            None
        )
        .is_err());
        assert!(build_grid(&GridMode::Explicit { values: vec![] }, 10, 1.0, None).is_err());
    }

    #[test]
    fn split_is_a_deterministic_partition() {
        let (d, _) = synthetic(21, 1);
        let (d1, d2, idx1, idx2) = split_source(&d, 77).unwrap();
        assert_eq!(d1.n(), 11);
        assert_eq!(d2.n(), 10);
        let mut all: Vec<usize> = idx1.iter().chain(idx2.iter()).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..21).collect::<Vec<_>>());
        let (_, _, idx1b, idx2b) = split_source(&d, 77).unwrap();
        assert_eq!(idx1, idx1b);
        assert_eq!(idx2, idx2b);
    }

    #[test]
    fn single_value_grid_reduces_to_ra_learner_on_d1() {
        let (d, dt) = synthetic(40, 2);
        let mut cfg = CokeConfig::new(KernelSpec::matern_exp(5.0).unwrap());
        cfg.grid_mode = GridMode::Explicit { values: vec![0.05] };
        cfg.lambda_first = Some((0.02, 0.02));
        cfg.split_seed = 5;
        let out = run(&cfg, &d, &dt).unwrap();
        assert_eq!(out.candidates.len(), 1);
        assert_eq!(out.report.chosen_index, 0);
        let d1 = d.subset(&out.d1_indices).unwrap();
        let triple = RegularizerTriple::new(0.02, 0.02, 0.05).unwrap();
        let direct = ra_learner(&cfg.kernel, &d1, &triple).unwrap();
        let diff = (out.model.predict(dt.covariates()).unwrap()
            - direct.predict(dt.covariates()).unwrap())
        .amax();
        assert!(diff <= 1e-8, "diff {diff}");
    }

    #[test]
    fn runs_are_bit_reproducible() {
        let (d, dt) = synthetic(36, 3);
        let mut cfg = CokeConfig::new(KernelSpec::matern_exp(5.0).unwrap());
        cfg.split_seed = 11;
        let a = run(&cfg, &d, &dt).unwrap();
        let b = run(&cfg, &d, &dt).unwrap();
        assert_eq!(a.report.chosen_index, b.report.chosen_index);
        assert_eq!(a.report.losses, b.report.losses);
        assert_eq!(
            a.model.predict(dt.covariates()).unwrap().as_slice(),
            b.model.predict(dt.covariates()).unwrap().as_slice()
        );
    }

    #[test]
    fn report_reproduces_the_chosen_candidate() {
        let (d, dt) = synthetic(44, 4);
        let mut cfg = CokeConfig::new(KernelSpec::matern_exp(5.0).unwrap());
        cfg.split_seed = 13;
        let out = run(&cfg, &d, &dt).unwrap();
        assert!(out.grid.contains(&out.report.lambda_chosen.lambda1));
        let d1 = d.subset(&out.d1_indices).unwrap();
        let rerun = ra_learner(&cfg.kernel, &d1, &out.report.lambda_chosen).unwrap();
        let diff = (out.model.predict(dt.covariates()).unwrap()
            - rerun.predict(dt.covariates()).unwrap())
        .amax();
        assert!(diff <= 1e-8, "diff {diff}");
    }

    #[test]
    fn empty_arm_errors_name_the_split() {
        // All-treated data: the D1 nuisance stage must fail on arm 0.
        let n = 12;
        let z = DMatrix::from_fn(n, 1, |i, _| i as f64 / 2.0);
        let d = LabeledDataset::new(z, vec![1; n], DVector::zeros(n)).unwrap();
        let zt = DMatrix::from_fn(4, 1, |i, _| i as f64);
        let dt = UnlabeledDataset::new(zt).unwrap();
        let cfg = CokeConfig::new(KernelSpec::matern_exp(5.0).unwrap());
        match run(&cfg, &d, &dt) {
            Err(CokeError::EmptyArm { arm: 0, split }) => {
                assert!(split.contains("D1"), "split label: {split}");
            }
            other => panic!("expected EmptyArm on D1, got {other:?}"),
        }
    }

    #[test]
    fn crossfit_prediction_is_the_mean_of_leg_predictions() {
        let (d, dt) = synthetic(38, 6);
        let mut cfg = CokeConfig::new(KernelSpec::matern_exp(5.0).unwrap());
        cfg.split_seed = 21;
        let out = run_crossfit(&cfg, &d, &dt).unwrap();
        let pa = out.legs[0].model.predict(dt.covariates()).unwrap();
        let pb = out.legs[1].model.predict(dt.covariates()).unwrap();
        let avg = out.model.predict(dt.covariates()).unwrap();
        for i in 0..avg.len() {
            assert_eq!(avg[i], (pa[i] + pb[i]) / 2.0);
        }
    }

    #[test]
    fn crossfit_legs_coincide_on_mirrored_halves() {
        // Assign identical row content to the two halves of a fixed split:
        // the legs then see the same data and select identical candidates.
        let n = 24;
        let seed = 33;
        let mut rng = stream_rng(seed, 0);
        let (idx1, idx2) = crate::rng::half_split(n, &mut rng);
        let mut z = DMatrix::zeros(n, 1);
        let mut a = vec![0u8; n];
        let mut y = DVector::zeros(n);
        let mut content_rng = stream_rng(99, 0);
        for k in 0..idx1.len() {
            let zv: f64 = content_rng.random_range(-3.0..3.0);
            let av = (k % 2) as u8;
            let yv = zv.sin() + av as f64;
            for &i in [idx1[k], idx2[k]].iter() {
                z[(i, 0)] = zv;
                a[i] = av;
                y[i] = yv;
            }
        }
        let d = LabeledDataset::new(z, a, y).unwrap();
        let zt = DMatrix::from_fn(6, 1, |i, _| -2.0 + i as f64 * 0.8);
        let dt = UnlabeledDataset::new(zt).unwrap();
        let mut cfg = CokeConfig::new(KernelSpec::matern_exp(5.0).unwrap());
        cfg.split_seed = seed;
        let out = run_crossfit(&cfg, &d, &dt).unwrap();
        assert_eq!(out.legs[0].report.losses, out.legs[1].report.losses);
        let pa = out.legs[0].model.predict(dt.covariates()).unwrap();
        let avg = out.model.predict(dt.covariates()).unwrap();
        for i in 0..avg.len() {
            assert_eq!(avg[i], pa[i]);
        }
    }
}
