use std::path::Path;

use coke::{
    density_ratio_diag, effective_sample_size, efficient_score, fit_method, fit_score_nuisances,
    model_io, pearson, simulation, spearman, Knob, MethodSpec, SimConfig,
};

use crate::config::{bench_options_from, coke_config_from, Config};
use crate::errors::{CliError, CliResult};
use crate::tables::{csv_text, fmt_f64, read_labeled, read_unlabeled, write_file};

/// `simulate --config <file> --out <csv>`: run the configured sweep. The
/// exit code is 0 when every cell succeeded; otherwise the most severe
/// per-cell failure category (4 numerical, else 3 degenerate, else 2).
pub fn simulate(config_path: &Path, out: &Path, seed_flag: Option<u64>) -> CliResult<i32> {
    let mut config = Config::load(config_path)?;

    let mut base = SimConfig::desk_default();
    if let Some(n) = config.take_usize("sim.n")? {
        base.n = n;
        base.n_t = n.div_ceil(4);
    }
    if let Some(n_t) = config.take_usize("sim.n_t")? {
        base.n_t = n_t;
    }
    if let Some(p) = config.take_usize("sim.p")? {
        base.p = p;
    }
    if let Some(q) = config.take_usize("sim.q")? {
        base.q = q;
    }
    if let Some(v) = config.take_f64("sim.s_b")? {
        base.s_b = v;
    }
    if let Some(v) = config.take_f64("sim.s_r")? {
        base.s_r = v;
    }
    if let Some(v) = config.take_f64("sim.c")? {
        base.c = v;
    }
    if let Some(v) = config.take_f64("sim.noise_sd")? {
        base.noise_sd = v;
    }
    if let Some(v) = config.take_usize("sim.n_eval")? {
        base.n_eval = v;
    }
    if let Some(v) = config.take_usize("sim.reps")? {
        base.reps = v;
    }
    if let Some(v) = config.take_u64("sim.seed")? {
        base.seed = v;
    }
    if let Some(seed) = seed_flag {
        base.seed = seed;
    }

    let knob = Knob::parse(
        &config
            .take_string("sweep.knob")
            .ok_or_else(|| CliError::input("missing required key sweep.knob"))?,
    )?;
    let values = config
        .take_f64_list("sweep.values")?
        .ok_or_else(|| CliError::input("missing required key sweep.values"))?;
    let method_names = config.take_string_list("sweep.methods").unwrap_or_else(|| {
        ["coke", "coke_cf", "sr", "dr", "acw"]
            .map(String::from)
            .to_vec()
    });
    let methods: Vec<MethodSpec> = method_names
        .iter()
        .map(|name| MethodSpec::parse(name))
        .collect::<Result<_, _>>()?;
    let couple_n = config.take_bool("sweep.couple_n")?.unwrap_or(false);

    let template = coke_config_from(&mut config, base.seed)?;
    let bench = bench_options_from(&mut config)?;
    config.finish()?;
    base.validate()?;

    let reps = base.reps;
    let rows = simulation::sweep(&base, knob, &values, &methods, reps, &template, &bench, couple_n);

    let text = csv_text(
        &["knob", "value", "method", "rep", "mse", "runtime_ms", "status"],
        rows.iter().map(|row| {
            vec![
                row.knob.to_string(),
                fmt_f64(row.value),
                row.method.clone(),
                row.rep.to_string(),
                row.mse.map(fmt_f64).unwrap_or_default(),
                fmt_f64(row.runtime_ms),
                row.status.clone(),
            ]
        }),
    );
    write_file(out, &text)?;

    let mut code = 0;
    for row in &rows {
        let cell_code = if row.status == "ok" {
            0
        } else if row.status.starts_with("numerical-failure") {
            4
        } else if row.status.starts_with("empty-arm") || row.status.starts_with("undefined") {
            3
        } else {
            2
        };
        code = code.max(cell_code);
    }
    Ok(code)
}

/// `fit <source> <target> --method <name> --out <model>`: estimate a CATE
/// model and write it with a key = value report.
pub fn fit(
    source_path: &Path,
    target_path: &Path,
    config_path: Option<&Path>,
    method_name: &str,
    out: &Path,
    report_path: Option<&Path>,
    seed: u64,
) -> CliResult<()> {
    let mut config = match config_path {
        Some(path) => Config::load(path)?,
        None => Config::empty(),
    };
    let spec = MethodSpec::parse(method_name)?;
    let mut cfg = coke_config_from(&mut config, seed)?;
    let bench = bench_options_from(&mut config)?;
    config.finish()?;
    cfg.crossfit = cfg.crossfit || spec.crossfit;

    let source = read_labeled(source_path)?;
    let target = read_unlabeled(target_path)?;
    if source.dim() != target.dim() {
        return Err(CliError::input(format!(
            "covariate dimension mismatch: source has {} columns, target has {}",
            source.dim(),
            target.dim()
        )));
    }

    let label = MethodSpec::new(spec.method, cfg.crossfit).label();
    let fitted = fit_method(spec.method, &cfg, &bench, &source, &target)?;
    model_io::write_model(out, &fitted.model, &label)?;

    let mut report = String::new();
    report.push_str("coke-report-v1\n");
    report.push_str(&format!("seed = {seed}\n"));
    for (key, value) in &fitted.details {
        report.push_str(&format!("{key} = {value}\n"));
    }
    let default_report = out.with_extension("report.txt");
    write_file(report_path.unwrap_or(&default_report), &report)?;
    Ok(())
}

/// `predict <covariates> --model <file> --out <csv>`.
pub fn predict(covariates_path: &Path, model_path: &Path, out: &Path) -> CliResult<()> {
    let (model, _) = model_io::read_model(model_path)?;
    let data = read_unlabeled(covariates_path)?;
    if data.dim() != model.dim() {
        return Err(CliError::input(format!(
            "covariate dimension mismatch: file has {} columns, model expects {}",
            data.dim(),
            model.dim()
        )));
    }
    let preds = model.predict(data.covariates())?;
    let text = csv_text(
        &["prediction"],
        preds.iter().map(|p| vec![fmt_f64(*p)]),
    );
    write_file(out, &text)
}

/// `diagnose <source> <target> [--labeled-target <file>] [--model <file>]*`.
#[allow(clippy::too_many_arguments)]
pub fn diagnose(
    source_path: &Path,
    target_path: &Path,
    labeled_target_path: Option<&Path>,
    model_paths: &[std::path::PathBuf],
    out: &Path,
    summary_path: Option<&Path>,
    scores_path: Option<&Path>,
    correlations_path: Option<&Path>,
) -> CliResult<()> {
    let source = read_unlabeled(source_path)?;
    let target = read_unlabeled(target_path)?;
    if source.dim() != target.dim() {
        return Err(CliError::input(format!(
            "covariate dimension mismatch: source has {} columns, target has {}",
            source.dim(),
            target.dim()
        )));
    }

    let diag = density_ratio_diag(&source, &target)?;
    let log_rows = diag
        .log10_source
        .iter()
        .map(|v| vec!["source".to_string(), fmt_f64(*v)])
        .chain(
            diag.log10_target
                .iter()
                .map(|v| vec!["target".to_string(), fmt_f64(*v)]),
        );
    write_file(out, &csv_text(&["sample", "log10_ratio"], log_rows))?;

    let source_weights = diag.model.ratios(source.covariates())?;
    let ess = effective_sample_size(source_weights.as_slice())?;
    println!("effective sample size (source, density-ratio weights): {ess:.2}");
    if let Some(path) = summary_path {
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let rows = vec![
            vec!["n_source".to_string(), source.n().to_string()],
            vec!["n_target".to_string(), target.n().to_string()],
            vec!["ess_source".to_string(), fmt_f64(ess)],
            vec![
                "mean_log10_ratio_source".to_string(),
                fmt_f64(mean(&diag.log10_source)),
            ],
            vec![
                "mean_log10_ratio_target".to_string(),
                fmt_f64(mean(&diag.log10_target)),
            ],
        ];
        write_file(path, &csv_text(&["key", "value"], rows))?;
    }

    let Some(labeled_path) = labeled_target_path else {
        if scores_path.is_some() || correlations_path.is_some() {
            return Err(CliError::input(
                "--scores and --correlations require --labeled-target",
            ));
        }
        return Ok(());
    };
    let labeled = read_labeled(labeled_path)?;
    if labeled.dim() != source.dim() {
        return Err(CliError::input(format!(
            "covariate dimension mismatch: labeled target has {} columns, source has {}",
            labeled.dim(),
            source.dim()
        )));
    }
    let nuisances = fit_score_nuisances(&labeled)?;
    let scores = efficient_score(
        &labeled,
        &nuisances.propensity.model,
        &nuisances.f0,
        &nuisances.f1,
        coke::diagnostics::SCORE_PROPENSITY_CLIP,
    )?;
    if let Some(path) = scores_path {
        write_file(
            path,
            &csv_text(&["score"], scores.iter().map(|s| vec![fmt_f64(*s)])),
        )?;
    }

    if model_paths.is_empty() {
        if correlations_path.is_some() {
            return Err(CliError::input("--correlations requires at least one --model"));
        }
        return Ok(());
    }
    let mut rows = Vec::new();
    for path in model_paths {
        let (model, method) = model_io::read_model(path)?;
        if model.dim() != labeled.dim() {
            return Err(CliError::input(format!(
                "model {} expects {} covariates, labeled target has {}",
                path.display(),
                model.dim(),
                labeled.dim()
            )));
        }
        let preds = model.predict(labeled.covariates())?;
        let s = spearman(preds.as_slice(), scores.as_slice())?;
        let p = pearson(preds.as_slice(), scores.as_slice())?;
        println!("{method}: spearman {s:.4}, pearson {p:.4} (n = {})", labeled.n());
        rows.push(vec![
            method,
            fmt_f64(s),
            fmt_f64(p),
            labeled.n().to_string(),
        ]);
    }
    if let Some(path) = correlations_path {
        write_file(path, &csv_text(&["method", "spearman", "pearson", "n"], rows))?;
    }
    Ok(())
}
