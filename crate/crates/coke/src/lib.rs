//! Transfer learning of conditional average treatment effects (CATE) with
//! kernel ridge regression, adaptive to weak overlap between populations and
//! between treatment arms.
//!
//! The central estimator splits the labeled source data in half, builds a
//! grid of regression-adjustment CATE candidates on the first half, imputes
//! counterfactual contrasts on the unlabeled target covariates with a
//! lightly regularized fit on the second half, and selects the candidate
//! closest to those imputed outcomes. Cross-fitting swaps the two halves and
//! averages. The crate also ships the benchmark estimators used for
//! comparison (separate regression with pseudo-label selection, a doubly
//! robust two-stage learner, and a density-ratio-augmented variant), the
//! synthetic data-generating process used in the experiments, and overlap
//! diagnostics for real datasets.

pub mod benchmarks;
pub mod cate;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod kernel;
pub mod krr;
pub mod logistic;
pub mod methods;
pub mod model_io;
pub mod pipeline;
pub mod rng;
pub mod selection;
pub mod simulation;

pub use benchmarks::{
    acw_cate, acw_cate_crossfit, dr_cate, dr_cate_crossfit, dr_pseudo_outcomes, sr_pseudo_label,
    sr_pseudo_label_crossfit, AcwCateFit, BenchOptions, DrCateFit, SrFit,
};
pub use cate::{
    pseudo_outcomes, ra_learner, ra_learner_grid, separate_regression, CateModel, FnModel,
    RaGridFit, Regressor, RegularizerTriple,
};
pub use data::{LabeledDataset, UnlabeledDataset};
pub use diagnostics::{
    average_ranks, density_ratio_diag, effective_sample_size, efficient_score,
    fit_score_nuisances, pearson, ridge_linear_fit, spearman, DensityRatioDiag, LinearModel,
    ScoreNuisances,
};
pub use error::{CokeError, Result};
pub use kernel::KernelSpec;
pub use krr::{fit, fit_arm, fit_grid, KrrModel};
pub use logistic::{logistic_fit, DensityRatioModel, LogisticFit, LogisticModel};
pub use methods::{fit_method, FittedMethod, Method, MethodSpec};
pub use pipeline::{build_grid, run, run_crossfit, CokeConfig, CrossfitOutput, GridMode, RunOutput};
pub use selection::{build_imputation, default_imputation_lambda, select, Candidate, SelectionReport};
pub use simulation::{
    coupled_target_size, evaluate_mse, gen_source, gen_target, mixture_weight, propensity, sweep,
    true_cate, true_outcome, Knob, SimConfig, SweepRow,
};
