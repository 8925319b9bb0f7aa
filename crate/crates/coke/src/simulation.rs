//! Synthetic data-generating process, ground-truth functions, target-MSE
//! evaluation, and parameter sweeps.
//!
//! Covariates live in `(−π, π)^p`. The first `q` coordinates are drawn from
//! a two-block uniform mixture whose weights are mirrored between source and
//! target, so `S_B` controls how far the two covariate distributions drift
//! apart. Treatment assignment follows a logistic propensity whose slope
//! `S_R` controls the overlap between arms, and the outcome functions add a
//! kinked even term (scaled by `c`) to an odd sinusoidal treatment effect,
//! making the nuisances rougher than the contrast they differ by.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use std::f64::consts::PI;
use std::time::Instant;

use crate::benchmarks::BenchOptions;
use crate::cate::Regressor;
use crate::data::{LabeledDataset, UnlabeledDataset};
use crate::error::{CokeError, Result};
use crate::methods::{fit_method, MethodSpec};
use crate::pipeline::CokeConfig;
use crate::rng::{cell_rng, Role};

/// Parameters of the data-generating process and of its evaluation.
#[derive(Debug, Clone)]
pub struct SimConfig {
    /// Source sample size.
    pub n: usize,
    /// Target (unlabeled) sample size.
    pub n_t: usize,
    /// Covariate dimension.
    pub p: usize,
    /// Number of leading coordinates subject to distribution shift; `q < p`.
    pub q: usize,
    /// Degree of source/target covariate shift; `>= 1`.
    pub s_b: f64,
    /// Degree of treated/control non-overlap; `>= 0`.
    pub s_r: f64,
    /// Complexity of the outcome functions relative to the effect; `>= 0`.
    pub c: f64,
    /// Outcome noise standard deviation.
    pub noise_sd: f64,
    pub seed: u64,
    pub reps: usize,
    /// Fresh target draws per MSE evaluation.
    pub n_eval: usize,
}

impl SimConfig {
    /// The default full-scale setting: `q = 1`, `S_B = 10`, `S_R = 2`,
    /// `c = 1`, and sample sizes coupled to the shift parameters.
    pub fn paper_default() -> Self {
        let n_t = coupled_target_size(10.0, 2.0);
        Self {
            n: 4 * n_t,
            n_t,
            p: 4,
            q: 1,
            s_b: 10.0,
            s_r: 2.0,
            c: 1.0,
            noise_sd: 0.5,
            seed: 0,
            reps: 100,
            n_eval: 10_000,
        }
    }

    /// Reduced-scale profile used by the fast test suites:
    /// `n = 1000`, `n_T = 250`, other parameters as in the default setting.
    pub fn desk_default() -> Self {
        Self {
            n: 1000,
            n_t: 250,
            reps: 20,
            ..Self::paper_default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.q >= self.p || self.q == 0 {
            return Err(CokeError::invalid(format!(
                "need 1 <= q < p, got q={}, p={}",
                self.q, self.p
            )));
        }
        if self.n == 0 || self.n_t == 0 || self.n_eval == 0 {
            return Err(CokeError::invalid("sample sizes must be positive"));
        }
        if self.s_b.is_nan() || self.s_b < 1.0 {
            return Err(CokeError::invalid(format!("need S_B >= 1, got {}", self.s_b)));
        }
        for v in [self.s_r, self.c, self.noise_sd] {
            if v.is_nan() || v < 0.0 {
                return Err(CokeError::invalid(
                    "S_R, c and the noise level must be nonnegative",
                ));
            }
        }
        Ok(())
    }
}

/// Mixture weight `S_B^{1/q} / (S_B^{1/q} + 1)` placed by the source on the
/// negative block of each shifted coordinate; always in `[1/2, 1)`.
pub fn mixture_weight(s_b: f64, q: usize) -> f64 {
    let root = s_b.powf(1.0 / q as f64);
    root / (root + 1.0)
}

/// Sample-size coupling `n_T = ⌈350 √S_B + 60 S_R + 25⌉` used when a sweep
/// varies the shift parameters.
pub fn coupled_target_size(s_b: f64, s_r: f64) -> usize {
    (350.0 * s_b.sqrt() + 60.0 * s_r + 25.0).ceil() as usize
}

/// Propensity `expit(S_R Σ_{j<=4} z_j / 8)`; the sum runs over the first
/// four coordinates (all of them in the default `p = 4`).
pub fn propensity(cfg: &SimConfig, z: &[f64]) -> f64 {
    let k = cfg.p.min(4);
    let s: f64 = z[..k].iter().sum();
    expit(cfg.s_r * s / 8.0)
}

fn expit(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// True treatment effect `h*(z) = q⁻¹ Σ_{i<=q} sin zᵢ`.
pub fn true_cate(cfg: &SimConfig, z: &[f64]) -> f64 {
    let s: f64 = z[..cfg.q].iter().map(|v| v.sin()).sum();
    s / cfg.q as f64
}

/// True outcome function
/// `f*_a(z) = c·q⁻¹ Σ [2(|zᵢ|−π/4)1(|zᵢ|≥π/2) + |zᵢ|1(|zᵢ|<π/2)] + (a−½)h*(z)`.
pub fn true_outcome(cfg: &SimConfig, z: &[f64], arm: u8) -> f64 {
    let rough: f64 = z[..cfg.q]
        .iter()
        .map(|&v| {
            let av = v.abs();
            if av >= PI / 2.0 {
                2.0 * (av - PI / 4.0)
            } else {
                av
            }
        })
        .sum::<f64>()
        / cfg.q as f64;
    cfg.c * rough + (arm as f64 - 0.5) * true_cate(cfg, z)
}

/// One covariate row. `source` selects which side of the mixture carries the
/// weight `w` for the first `q` coordinates. Draw order per row: for each
/// shifted coordinate a block selector then the position, then the trailing
/// uniform coordinates.
fn draw_row<R: Rng>(cfg: &SimConfig, source: bool, rng: &mut R) -> Vec<f64> {
    let w = mixture_weight(cfg.s_b, cfg.q);
    let negative_weight = if source { w } else { 1.0 - w };
    let mut row = Vec::with_capacity(cfg.p);
    for _ in 0..cfg.q {
        let pick: f64 = rng.random();
        let value = if pick < negative_weight {
            rng.random_range(-PI..0.0)
        } else {
            rng.random_range(0.0..PI)
        };
        row.push(value);
    }
    for _ in cfg.q..cfg.p {
        row.push(rng.random_range(-PI..PI));
    }
    row
}

/// Labeled source draw: covariates, Bernoulli treatment from the propensity,
/// Gaussian outcome noise.
pub fn gen_source<R: Rng>(cfg: &SimConfig, rng: &mut R) -> Result<LabeledDataset> {
    cfg.validate()?;
    let noise = Normal::new(0.0, cfg.noise_sd)
        .map_err(|e| CokeError::invalid(format!("bad noise level: {e}")))?;
    let mut z = DMatrix::zeros(cfg.n, cfg.p);
    let mut a = Vec::with_capacity(cfg.n);
    let mut y = DVector::zeros(cfg.n);
    for i in 0..cfg.n {
        let row = draw_row(cfg, true, rng);
        let pi = propensity(cfg, &row);
        let arm = u8::from(rng.random::<f64>() < pi);
        let outcome = true_outcome(cfg, &row, arm) + noise.sample(rng);
        for (j, &v) in row.iter().enumerate() {
            z[(i, j)] = v;
        }
        a.push(arm);
        y[i] = outcome;
    }
    LabeledDataset::new(z, a, y)
}

/// Unlabeled target draw with the mirrored covariate mixture.
pub fn gen_target<R: Rng>(cfg: &SimConfig, rng: &mut R) -> Result<UnlabeledDataset> {
    cfg.validate()?;
    let mut z = DMatrix::zeros(cfg.n_t, cfg.p);
    for i in 0..cfg.n_t {
        let row = draw_row(cfg, false, rng);
        for (j, &v) in row.iter().enumerate() {
            z[(i, j)] = v;
        }
    }
    UnlabeledDataset::new(z)
}

/// Monte Carlo estimate of the target mean squared error
/// `E_{z ~ target} |ĥ(z) − h*(z)|²` over `n_eval` fresh draws.
pub fn evaluate_mse<M: Regressor>(model: &M, cfg: &SimConfig, rng: &mut impl Rng) -> Result<f64> {
    cfg.validate()?;
    let mut z = DMatrix::zeros(cfg.n_eval, cfg.p);
    let mut truth = DVector::zeros(cfg.n_eval);
    for i in 0..cfg.n_eval {
        let row = draw_row(cfg, false, rng);
        truth[i] = true_cate(cfg, &row);
        for (j, &v) in row.iter().enumerate() {
            z[(i, j)] = v;
        }
    }
    let preds = model.predict(&z)?;
    let mut acc = 0.0;
    for i in 0..cfg.n_eval {
        let d = preds[i] - truth[i];
        acc += d * d;
    }
    Ok(acc / cfg.n_eval as f64)
}

/// Which parameter a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Knob {
    ShiftSB,
    OverlapSR,
    ComplexityC,
    SampleSizeN,
    /// `S_B` sweep with two shifted coordinates (`q = 2`).
    ShiftSBq2,
}

impl Knob {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "s_b" => Ok(Knob::ShiftSB),
            "s_r" => Ok(Knob::OverlapSR),
            "c" => Ok(Knob::ComplexityC),
            "n" => Ok(Knob::SampleSizeN),
            "s_b_q2" => Ok(Knob::ShiftSBq2),
            other => Err(CokeError::invalid(format!(
                "unknown sweep knob '{other}' (expected s_b, s_r, c, n, s_b_q2)"
            ))),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Knob::ShiftSB => "s_b",
            Knob::OverlapSR => "s_r",
            Knob::ComplexityC => "c",
            Knob::SampleSizeN => "n",
            Knob::ShiftSBq2 => "s_b_q2",
        }
    }

    /// The configuration of one sweep cell. When `couple_n` is set and the
    /// knob is a shift parameter, the sample sizes follow the coupling
    /// formula; the sample-size knob always varies `n` with `n_T = n/4`.
    pub fn apply(&self, base: &SimConfig, value: f64, couple_n: bool) -> Result<SimConfig> {
        let mut cfg = base.clone();
        match self {
            Knob::ShiftSB => cfg.s_b = value,
            Knob::OverlapSR => cfg.s_r = value,
            Knob::ComplexityC => cfg.c = value,
            Knob::SampleSizeN => {
                if value < 4.0 || value.fract() != 0.0 {
                    return Err(CokeError::invalid(format!(
                        "sample-size knob values must be integers >= 4, got {value}"
                    )));
                }
                cfg.n = value as usize;
                cfg.n_t = (value as usize).div_ceil(4);
            }
            Knob::ShiftSBq2 => {
                cfg.q = 2;
                cfg.s_b = value;
            }
        }
        if couple_n && !matches!(self, Knob::SampleSizeN) {
            cfg.n_t = coupled_target_size(cfg.s_b, cfg.s_r);
            cfg.n = 4 * cfg.n_t;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// One row of a sweep result table.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub knob: &'static str,
    pub value: f64,
    pub method: String,
    pub rep: usize,
    pub mse: Option<f64>,
    pub runtime_ms: f64,
    pub status: String,
}

/// Runs `reps` replications of every method at every knob value. Cells run
/// independently (and in parallel) on their own random streams; the row
/// order is fixed by (value, method, rep). A failing cell is reported in its
/// `status` column and does not stop the sweep.
#[allow(clippy::too_many_arguments)]
pub fn sweep(
    base: &SimConfig,
    knob: Knob,
    values: &[f64],
    methods: &[MethodSpec],
    reps: usize,
    template: &CokeConfig,
    bench: &BenchOptions,
    couple_n: bool,
) -> Vec<SweepRow> {
    let mut cells = Vec::new();
    for &value in values {
        for method in methods {
            for rep in 0..reps {
                cells.push((value, method.clone(), rep));
            }
        }
    }
    cells
        .into_par_iter()
        .map(|(value, method, rep)| {
            let label = method.label();
            match run_cell(base, knob, value, &method, rep, template, bench, couple_n) {
                Ok((mse, runtime_ms)) => SweepRow {
                    knob: knob.label(),
                    value,
                    method: label,
                    rep,
                    mse: Some(mse),
                    runtime_ms,
                    status: "ok".to_string(),
                },
                Err(e) => SweepRow {
                    knob: knob.label(),
                    value,
                    method: label,
                    rep,
                    mse: None,
                    runtime_ms: 0.0,
                    status: status_of(&e),
                },
            }
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn run_cell(
    base: &SimConfig,
    knob: Knob,
    value: f64,
    method: &MethodSpec,
    rep: usize,
    template: &CokeConfig,
    bench: &BenchOptions,
    couple_n: bool,
) -> Result<(f64, f64)> {
    let cfg = knob.apply(base, value, couple_n)?;
    let mut source_rng = cell_rng(cfg.seed, rep as u64, Role::Source);
    let mut target_rng = cell_rng(cfg.seed, rep as u64, Role::Target);
    let mut eval_rng = cell_rng(cfg.seed, rep as u64, Role::Eval);
    let split_seed: u64 = cell_rng(cfg.seed, rep as u64, Role::Split).random();
    let data = gen_source(&cfg, &mut source_rng)?;
    let target = gen_target(&cfg, &mut target_rng)?;
    let mut coke_cfg = template.clone();
    coke_cfg.split_seed = split_seed;
    coke_cfg.crossfit = method.crossfit;
    let started = Instant::now();
    let fitted = fit_method(method.method, &coke_cfg, bench, &data, &target)?;
    let runtime_ms = started.elapsed().as_secs_f64() * 1e3;
    let mse = evaluate_mse(&fitted.model, &cfg, &mut eval_rng)?;
    Ok((mse, runtime_ms))
}

/// Compact machine-readable error category for the status column. Kept free
/// of commas so the CSV stays single-token per field.
pub fn status_of(e: &CokeError) -> String {
    let kind = match e {
        CokeError::InvalidInput(_) => "invalid-input",
        CokeError::EmptyArm { .. } => "empty-arm",
        CokeError::NumericalFailure(_) => "numerical-failure",
        CokeError::Unsupported(_) => "unsupported",
        CokeError::Undefined(_) => "undefined",
        CokeError::Io(_) => "io",
    };
    format!("{kind}: {}", e.to_string().replace(',', ";"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cate::FnModel;
    use crate::kernel::KernelSpec;
    use crate::methods::Method;
    use crate::rng::stream_rng;

    fn small_cfg() -> SimConfig {
        SimConfig {
            n: 200,
            n_t: 60,
            p: 4,
            q: 1,
            s_b: 10.0,
            s_r: 2.0,
            c: 1.0,
            noise_sd: 0.5,
            seed: 7,
            reps: 1,
            n_eval: 2000,
        }
    }

    #[test]
    fn mixture_weight_examples() {
        assert_eq!(mixture_weight(1.0, 1), 0.5);
        assert!((mixture_weight(10.0, 1) - 10.0 / 11.0).abs() < 1e-15);
        assert!((mixture_weight(10.0, 2) - 10f64.sqrt() / (10f64.sqrt() + 1.0)).abs() < 1e-15);
    }

    #[test]
    fn propensity_is_half_without_arm_shift() {
        let mut cfg = small_cfg();
        cfg.s_r = 0.0;
        assert_eq!(propensity(&cfg, &[1.0, -2.0, 0.5, 3.0]), 0.5);
    }

    #[test]
    fn propensity_stays_in_its_analytic_range() {
        let cfg = small_cfg();
        let mut rng = stream_rng(1, 0);
        let d = gen_source(&cfg, &mut rng).unwrap();
        let lo = expit(-cfg.s_r * PI / 2.0);
        let hi = expit(cfg.s_r * PI / 2.0);
        for i in 0..d.n() {
            let row: Vec<f64> = d.covariates().row(i).iter().copied().collect();
            let pi = propensity(&cfg, &row);
            assert!(pi > lo && pi < hi, "propensity {pi} outside ({lo}, {hi})");
        }
    }

    #[test]
    fn true_function_examples() {
        let mut cfg = small_cfg();
        cfg.c = 1.0;
        let z = [PI / 2.0, 0.0, 0.0, 0.0];
        assert!((true_cate(&cfg, &z) - 1.0).abs() < 1e-15);
        let expected = PI / 2.0 + 0.5;
        assert!((true_outcome(&cfg, &z, 1) - expected).abs() < 1e-12);
    }

    #[test]
    fn outcome_difference_is_the_effect() {
        let cfg = small_cfg();
        let mut rng = stream_rng(2, 0);
        for _ in 0..100_000 {
            let row = draw_row(&cfg, false, &mut rng);
            let diff = true_outcome(&cfg, &row, 1) - true_outcome(&cfg, &row, 0);
            assert!((diff - true_cate(&cfg, &row)).abs() <= 1e-14);
        }
    }

    #[test]
    fn shifted_coordinate_mirrors_between_source_and_target() {
        let mut cfg = small_cfg();
        cfg.s_b = 10.0;
        let n = 100_000;
        let mut rng = stream_rng(3, 0);
        let mean_target: f64 = (0..n)
            .map(|_| draw_row(&cfg, false, &mut rng)[0])
            .sum::<f64>()
            / n as f64;
        // (10/11)(π/2) + (1/11)(−π/2) = (9/11)(π/2)
        assert!((mean_target - 9.0 / 11.0 * PI / 2.0).abs() < 0.02, "mean {mean_target}");
        let mean_source: f64 = (0..n)
            .map(|_| draw_row(&cfg, true, &mut rng)[0])
            .sum::<f64>()
            / n as f64;
        assert!((mean_source + 9.0 / 11.0 * PI / 2.0).abs() < 0.02, "mean {mean_source}");
    }

    #[test]
    fn symmetric_mixture_matches_plain_uniform_moments() {
        let mut cfg = small_cfg();
        cfg.s_b = 1.0;
        let n = 100_000;
        let mut rng = stream_rng(4, 0);
        let mean: f64 = (0..n)
            .map(|_| draw_row(&cfg, true, &mut rng)[0])
            .sum::<f64>()
            / n as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn treated_fraction_is_balanced_without_arm_shift() {
        let mut cfg = small_cfg();
        cfg.s_r = 0.0;
        cfg.n = 10_000;
        let d = gen_source(&cfg, &mut stream_rng(5, 0)).unwrap();
        let frac = d.arm_count(1) as f64 / d.n() as f64;
        assert!((0.48..=0.52).contains(&frac), "treated fraction {frac}");
    }

    #[test]
    fn generation_is_seed_deterministic() {
        let cfg = small_cfg();
        let a = gen_source(&cfg, &mut stream_rng(6, 0)).unwrap();
        let b = gen_source(&cfg, &mut stream_rng(6, 0)).unwrap();
        assert_eq!(a.covariates().as_slice(), b.covariates().as_slice());
        assert_eq!(a.treatments(), b.treatments());
        assert_eq!(a.outcomes().as_slice(), b.outcomes().as_slice());
    }

    #[test]
    fn oracle_model_has_zero_mse() {
        let cfg = small_cfg();
        let oracle = FnModel(move |z: &[f64]| z[0].sin());
        let mse = evaluate_mse(&oracle, &cfg, &mut stream_rng(7, 0)).unwrap();
        assert_eq!(mse, 0.0);
    }

    #[test]
    fn zero_model_mse_is_half() {
        // E[sin² z] = 1/2 over the uniform, and the mixture of the two
        // half-intervals preserves it because sin² is even.
        for s_b in [1.0, 10.0] {
            let mut cfg = small_cfg();
            cfg.s_b = s_b;
            cfg.n_eval = 100_000;
            let zero = FnModel(|_: &[f64]| 0.0);
            let mse = evaluate_mse(&zero, &cfg, &mut stream_rng(8, 0)).unwrap();
            assert!((mse - 0.5).abs() < 0.01, "S_B={s_b}: mse {mse}");
        }
    }

    #[test]
    fn coupling_formula_example() {
        assert_eq!(coupled_target_size(10.0, 2.0), 1252);
    }

    #[test]
    fn knob_application() {
        let base = small_cfg();
        let cfg = Knob::ShiftSBq2.apply(&base, 25.0, true).unwrap();
        assert_eq!(cfg.q, 2);
        assert_eq!(cfg.s_b, 25.0);
        assert_eq!(cfg.n_t, coupled_target_size(25.0, base.s_r));
        assert_eq!(cfg.n, 4 * cfg.n_t);
        let cfg = Knob::SampleSizeN.apply(&base, 400.0, true).unwrap();
        assert_eq!(cfg.n, 400);
        assert_eq!(cfg.n_t, 100);
    }

    #[test]
    fn single_cell_sweep_yields_one_row() {
        let mut base = small_cfg();
        base.n = 120;
        base.n_t = 40;
        base.n_eval = 500;
        let template = CokeConfig::new(KernelSpec::matern_exp(5.0).unwrap());
        let rows = sweep(
            &base,
            Knob::ComplexityC,
            &[1.0],
            &[MethodSpec::new(Method::Coke, false)],
            1,
            &template,
            &BenchOptions::default(),
            false,
        );
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].status, "ok");
        assert!(rows[0].mse.unwrap() > 0.0);
        assert_eq!(rows[0].method, "coke");
    }

    #[test]
    fn sweep_marks_failed_cells_and_continues() {
        // S_R huge and a tiny sample: some replication ends up with an empty
        // arm in a split. Force it deterministically with n small.
        let mut base = small_cfg();
        base.n = 8;
        base.n_t = 10;
        base.n_eval = 100;
        base.s_r = 50.0;
        let template = CokeConfig::new(KernelSpec::matern_exp(5.0).unwrap());
        let rows = sweep(
            &base,
            Knob::OverlapSR,
            &[50.0],
            &[MethodSpec::new(Method::Coke, false)],
            6,
            &template,
            &BenchOptions::default(),
            false,
        );
        assert_eq!(rows.len(), 6);
        assert!(rows.iter().any(|r| r.status.starts_with("empty-arm")));
    }
}
