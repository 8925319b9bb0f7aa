//! Flat `key = value` configuration files.
//!
//! One assignment per line; `#` starts a comment (whole-line or trailing);
//! blank lines are ignored. Keys are dotted lowercase identifiers. Every key
//! must be consumed by the command that loads the file; leftovers are
//! rejected with their line numbers.

use std::collections::BTreeMap;
use std::path::Path;

use crate::errors::{CliError, CliResult};

pub struct Config {
    entries: BTreeMap<String, (String, usize)>,
    path: String,
}

impl Config {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::input(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, path: &str) -> CliResult<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.split_once('#') {
                Some((before, _)) => before,
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::input(format!(
                    "{path}:{}: expected 'key = value', got '{raw}'",
                    lineno + 1
                )));
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() || value.is_empty() {
                return Err(CliError::input(format!(
                    "{path}:{}: empty key or value",
                    lineno + 1
                )));
            }
            if entries.insert(key.clone(), (value, lineno + 1)).is_some() {
                return Err(CliError::input(format!(
                    "{path}:{}: duplicate key '{key}'",
                    lineno + 1
                )));
            }
        }
        Ok(Self {
            entries,
            path: path.to_string(),
        })
    }

    pub fn empty() -> Self {
        Self {
            entries: BTreeMap::new(),
            path: "<none>".to_string(),
        }
    }

    fn take(&mut self, key: &str) -> Option<(String, usize)> {
        self.entries.remove(key)
    }

    pub fn take_string(&mut self, key: &str) -> Option<String> {
        self.take(key).map(|(v, _)| v)
    }

    pub fn take_f64(&mut self, key: &str) -> CliResult<Option<f64>> {
        match self.take(key) {
            None => Ok(None),
            Some((v, line)) => v.parse().map(Some).map_err(|_| {
                CliError::input(format!(
                    "{}:{line}: '{key}' must be a number, got '{v}'",
                    self.path
                ))
            }),
        }
    }

    pub fn take_usize(&mut self, key: &str) -> CliResult<Option<usize>> {
        match self.take(key) {
            None => Ok(None),
            Some((v, line)) => v.parse().map(Some).map_err(|_| {
                CliError::input(format!(
                    "{}:{line}: '{key}' must be a nonnegative integer, got '{v}'",
                    self.path
                ))
            }),
        }
    }

    pub fn take_u64(&mut self, key: &str) -> CliResult<Option<u64>> {
        match self.take(key) {
            None => Ok(None),
            Some((v, line)) => v.parse().map(Some).map_err(|_| {
                CliError::input(format!(
                    "{}:{line}: '{key}' must be an unsigned integer, got '{v}'",
                    self.path
                ))
            }),
        }
    }

    pub fn take_bool(&mut self, key: &str) -> CliResult<Option<bool>> {
        match self.take(key) {
            None => Ok(None),
            Some((v, line)) => match v.as_str() {
                "true" | "yes" | "1" => Ok(Some(true)),
                "false" | "no" | "0" => Ok(Some(false)),
                _ => Err(CliError::input(format!(
                    "{}:{line}: '{key}' must be true or false, got '{v}'",
                    self.path
                ))),
            },
        }
    }

    /// Comma-separated list of numbers.
    pub fn take_f64_list(&mut self, key: &str) -> CliResult<Option<Vec<f64>>> {
        match self.take(key) {
            None => Ok(None),
            Some((v, line)) => v
                .split(',')
                .map(|item| item.trim().parse())
                .collect::<Result<Vec<f64>, _>>()
                .map(Some)
                .map_err(|_| {
                    CliError::input(format!(
                        "{}:{line}: '{key}' must be a comma-separated number list, got '{v}'",
                        self.path
                    ))
                }),
        }
    }

    /// Comma-separated list of words.
    pub fn take_string_list(&mut self, key: &str) -> Option<Vec<String>> {
        self.take(key)
            .map(|(v, _)| v.split(',').map(|s| s.trim().to_string()).collect())
    }

    /// Fails if any key was not consumed.
    pub fn finish(self) -> CliResult<()> {
        if let Some((key, (_, line))) = self.entries.into_iter().next() {
            return Err(CliError::input(format!(
                "{}:{line}: unknown key '{key}'",
                self.path
            )));
        }
        Ok(())
    }
}

/// Kernel settings shared by every command that fits models.
pub fn kernel_from(config: &mut Config) -> CliResult<coke::KernelSpec> {
    let family = config
        .take_string("kernel.family")
        .unwrap_or_else(|| "matern_exp".to_string());
    let rho = config.take_f64("kernel.rho")?.unwrap_or(5.0);
    let amplitude = config.take_f64("kernel.amplitude")?.unwrap_or(1.0);
    let spec = match family.as_str() {
        "matern_exp" => coke::KernelSpec::matern_exp(rho)?,
        "gaussian" => coke::KernelSpec::gaussian(rho)?,
        other => {
            return Err(CliError::input(format!(
                "unknown kernel.family '{other}' (expected matern_exp or gaussian)"
            )))
        }
    };
    Ok(spec.with_amplitude(amplitude)?)
}

/// COKE pipeline settings (grid mode, regularizer overrides, cross-fitting).
pub fn coke_config_from(config: &mut Config, seed: u64) -> CliResult<coke::CokeConfig> {
    let kernel = kernel_from(config)?;
    let mut cfg = coke::CokeConfig::new(kernel);
    cfg.split_seed = seed;
    match config.take_string("coke.grid").as_deref() {
        None | Some("experiment") => {}
        Some("theory") => cfg.grid_mode = coke::GridMode::Theory,
        Some("explicit") => {
            let values = config.take_f64_list("coke.grid.values")?.ok_or_else(|| {
                CliError::input("coke.grid = explicit requires coke.grid.values")
            })?;
            cfg.grid_mode = coke::GridMode::Explicit { values };
        }
        Some(other) => {
            return Err(CliError::input(format!(
                "unknown coke.grid '{other}' (expected theory, experiment, explicit)"
            )))
        }
    }
    cfg.q_override = config.take_usize("coke.q")?;
    let l00 = config.take_f64("coke.lambda00")?;
    let l01 = config.take_f64("coke.lambda01")?;
    match (l00, l01) {
        (None, None) => {}
        (a, b) => {
            let a = a.or(b).unwrap();
            let b = b.or(l00).unwrap();
            cfg.lambda_first = Some((a, b));
        }
    }
    let lt0 = config.take_f64("coke.lambda_tilde0")?;
    let lt1 = config.take_f64("coke.lambda_tilde1")?;
    match (lt0, lt1) {
        (None, None) => {}
        (a, b) => {
            let a = a.or(b).unwrap();
            let b = b.or(lt0).unwrap();
            cfg.lambda_imputation = Some((a, b));
        }
    }
    cfg.crossfit = config.take_bool("coke.crossfit")?.unwrap_or(false);
    Ok(cfg)
}

pub fn bench_options_from(config: &mut Config) -> CliResult<coke::BenchOptions> {
    let mut options = coke::BenchOptions::default();
    if let Some(clip) = config.take_f64("bench.propensity_clip")? {
        if !(0.0..0.5).contains(&clip) {
            return Err(CliError::input(format!(
                "bench.propensity_clip must lie in [0, 0.5), got {clip}"
            )));
        }
        options.propensity_clip = clip;
    }
    Ok(options)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_values() {
        let mut cfg = Config::parse("a.b = 3 # trailing\n# full line\n\nc = x, y\n", "t").unwrap();
        assert_eq!(cfg.take_f64("a.b").unwrap(), Some(3.0));
        assert_eq!(
            cfg.take_string_list("c"),
            Some(vec!["x".to_string(), "y".to_string()])
        );
        cfg.finish().unwrap();
    }

    #[test]
    fn rejects_unknown_keys_with_line_numbers() {
        let mut cfg = Config::parse("known = 1\nmystery = 2\n", "t").unwrap();
        assert_eq!(cfg.take_f64("known").unwrap(), Some(1.0));
        let err = cfg.finish().unwrap_err();
        assert_eq!(err.code, 2);
        assert!(err.message.contains("t:2"), "{}", err.message);
        assert!(err.message.contains("mystery"));
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(Config::parse("just words\n", "t").is_err());
        assert!(Config::parse("a = 1\na = 2\n", "t").is_err());
    }
}
