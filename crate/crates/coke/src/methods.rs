//! Uniform dispatch over the implemented CATE estimators, used by the
//! simulation sweeps and the command-line interface.

use crate::benchmarks::{
    acw_cate, acw_cate_crossfit, dr_cate, dr_cate_crossfit, sr_pseudo_label,
    sr_pseudo_label_crossfit, BenchOptions,
};
use crate::cate::CateModel;
use crate::data::{LabeledDataset, UnlabeledDataset};
use crate::error::{CokeError, Result};
use crate::pipeline::{build_grid, run, run_crossfit, CokeConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Coke,
    Sr,
    Dr,
    Acw,
}

impl Method {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "coke" => Ok(Method::Coke),
            "sr" => Ok(Method::Sr),
            "dr" => Ok(Method::Dr),
            "acw" => Ok(Method::Acw),
            other => Err(CokeError::invalid(format!(
                "unknown method '{other}' (expected coke, sr, dr, acw)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Method::Coke => "coke",
            Method::Sr => "sr",
            Method::Dr => "dr",
            Method::Acw => "acw",
        }
    }
}

/// A method plus its cross-fitting flag, as named in sweep tables:
/// `coke`, `coke_cf`, `sr`, `sr_cf`, `dr`, `dr_cf`, `acw`, `acw_cf`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MethodSpec {
    pub method: Method,
    pub crossfit: bool,
}

impl MethodSpec {
    pub fn new(method: Method, crossfit: bool) -> Self {
        Self { method, crossfit }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let (base, crossfit) = match s.strip_suffix("_cf") {
            Some(base) => (base, true),
            None => (s, false),
        };
        Ok(Self::new(Method::parse(base)?, crossfit))
    }

    pub fn label(&self) -> String {
        if self.crossfit {
            format!("{}_cf", self.method.name())
        } else {
            self.method.name().to_string()
        }
    }
}

/// A fitted estimator plus a flat report for logging: ordered key/value
/// pairs describing split sizes, chosen regularizers, and candidate losses.
pub struct FittedMethod {
    pub model: CateModel,
    pub details: Vec<(String, String)>,
}

/// Fits the requested estimator. All methods share the grid construction,
/// the kernel, and the seed from `cfg`; `cfg.crossfit` selects the two-fold
/// averaged variant.
pub fn fit_method(
    method: Method,
    cfg: &CokeConfig,
    bench: &BenchOptions,
    data: &LabeledDataset,
    target: &UnlabeledDataset,
) -> Result<FittedMethod> {
    let mut details: Vec<(String, String)> = vec![
        ("method".into(), method.name().into()),
        ("crossfit".into(), cfg.crossfit.to_string()),
        ("n".into(), data.n().to_string()),
        ("n_target".into(), target.n().to_string()),
    ];
    match method {
        Method::Coke => {
            if cfg.crossfit {
                let out = run_crossfit(cfg, data, target)?;
                for (leg, run) in out.legs.iter().enumerate() {
                    details.push((
                        format!("leg{leg}_chosen_lambda1"),
                        run.report.lambda_chosen.lambda1.to_string(),
                    ));
                    details.push((
                        format!("leg{leg}_losses"),
                        join_losses(&run.report.losses),
                    ));
                }
                details.push(("n1".into(), out.legs[0].d1_indices.len().to_string()));
                details.push(("n2".into(), out.legs[0].d2_indices.len().to_string()));
                Ok(FittedMethod {
                    model: out.model,
                    details,
                })
            } else {
                let out = run(cfg, data, target)?;
                details.push(("n1".into(), out.d1_indices.len().to_string()));
                details.push(("n2".into(), out.d2_indices.len().to_string()));
                details.push((
                    "lambda00".into(),
                    out.candidates[0].lambdas.lambda00.to_string(),
                ));
                details.push((
                    "lambda01".into(),
                    out.candidates[0].lambdas.lambda01.to_string(),
                ));
                details.push((
                    "chosen_index".into(),
                    out.report.chosen_index.to_string(),
                ));
                details.push((
                    "chosen_lambda1".into(),
                    out.report.lambda_chosen.lambda1.to_string(),
                ));
                details.push(("grid".into(), join_losses(&out.grid)));
                details.push(("losses".into(), join_losses(&out.report.losses)));
                Ok(FittedMethod {
                    model: out.model,
                    details,
                })
            }
        }
        Method::Sr => {
            let (grid, lambda_tilde) = shared_grid(cfg, data.n())?;
            if cfg.crossfit {
                let (model, legs) = sr_pseudo_label_crossfit(
                    &cfg.kernel,
                    data,
                    target,
                    &grid,
                    lambda_tilde,
                    cfg.split_seed,
                )?;
                for (leg, fit) in legs.iter().enumerate() {
                    details.push((
                        format!("leg{leg}_chosen_lambdas"),
                        format!("{};{}", fit.chosen_lambdas[0], fit.chosen_lambdas[1]),
                    ));
                }
                Ok(FittedMethod { model, details })
            } else {
                let fit = sr_pseudo_label(
                    &cfg.kernel,
                    data,
                    target,
                    &grid,
                    lambda_tilde,
                    cfg.split_seed,
                )?;
                details.push((
                    "chosen_lambda0".into(),
                    fit.chosen_lambdas[0].to_string(),
                ));
                details.push((
                    "chosen_lambda1".into(),
                    fit.chosen_lambdas[1].to_string(),
                ));
                Ok(FittedMethod {
                    model: fit.model,
                    details,
                })
            }
        }
        Method::Dr => {
            let (grid, _) = shared_grid(cfg, data.n())?;
            if cfg.crossfit {
                let (model, legs) =
                    dr_cate_crossfit(&cfg.kernel, data, &grid, bench, cfg.split_seed)?;
                for (leg, fit) in legs.iter().enumerate() {
                    details.push((
                        format!("leg{leg}_chosen_lambda"),
                        fit.chosen_lambda.to_string(),
                    ));
                }
                Ok(FittedMethod { model, details })
            } else {
                let fit = dr_cate(&cfg.kernel, data, &grid, bench, cfg.split_seed)?;
                details.push(("chosen_lambda".into(), fit.chosen_lambda.to_string()));
                Ok(FittedMethod {
                    model: fit.model,
                    details,
                })
            }
        }
        Method::Acw => {
            let (grid, _) = shared_grid(cfg, data.n())?;
            if cfg.crossfit {
                let (model, legs) =
                    acw_cate_crossfit(&cfg.kernel, data, target, &grid, bench, cfg.split_seed)?;
                for (leg, fit) in legs.iter().enumerate() {
                    details.push((
                        format!("leg{leg}_chosen_lambda"),
                        fit.chosen_lambda.to_string(),
                    ));
                }
                Ok(FittedMethod { model, details })
            } else {
                let fit = acw_cate(&cfg.kernel, data, target, &grid, bench, cfg.split_seed)?;
                details.push(("chosen_lambda".into(), fit.chosen_lambda.to_string()));
                details.push((
                    "mean_source_weight".into(),
                    fit.mean_source_weight.to_string(),
                ));
                Ok(FittedMethod {
                    model: fit.model,
                    details,
                })
            }
        }
    }
}

/// The benchmark methods reuse the pipeline's grid and take the imputation
/// base value as their small regularizer.
fn shared_grid(cfg: &CokeConfig, n: usize) -> Result<(Vec<f64>, f64)> {
    let xi = cfg.kernel.sup_bound()?;
    let grid = build_grid(&cfg.grid_mode, n, xi, cfg.q_override)?;
    let lambda_tilde = cfg
        .lambda_imputation
        .map(|(l0, _)| l0)
        .unwrap_or_else(|| match cfg.grid_mode {
            crate::pipeline::GridMode::Experiment => 1.0 / (5.0 * n as f64),
            _ => xi * (n as f64).ln() / n as f64,
        });
    Ok((grid, lambda_tilde))
}

fn join_losses(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(";")
}
