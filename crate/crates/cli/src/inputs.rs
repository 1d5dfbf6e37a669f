//! Resolution of model, platform and schedule arguments.

use std::path::{Path, PathBuf};

use ovsfgen::model::{
    builtin_model, builtin_platform, builtin_schedule, parse_model, parse_platform, parse_schedule, BandwidthTier,
    ModelSpec, PlatformSpec, RatioSchedule,
};

use crate::CliError;

pub struct Resolver {
    config_dir: Option<PathBuf>,
}

impl Resolver {
    pub fn new(config_dir: Option<PathBuf>) -> Self {
        Self { config_dir }
    }

    /// An existing path wins, then a builtin preset, then
    /// `<config_dir>/<name>.toml`.
    fn load<T>(
        &self,
        what: &str,
        arg: &str,
        builtin: impl Fn(&str) -> ovsfgen::Result<T>,
        parse: impl Fn(&str, &str) -> ovsfgen::Result<T>,
    ) -> Result<T, CliError> {
        let from_file = |p: &Path| -> Result<T, CliError> {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Input(format!("cannot read {what} file {}: {e}", p.display())))?;
            Ok(parse(&text, &p.display().to_string())?)
        };
        let path = Path::new(arg);
        if path.is_file() {
            return from_file(path);
        }
        builtin(arg).or_else(|e| {
            if let Some(dir) = &self.config_dir {
                let p = dir.join(format!("{arg}.toml"));
                if p.is_file() {
                    return from_file(&p);
                }
            }
            Err(CliError::Input(format!("{what} '{arg}': {e}")))
        })
    }

    pub fn model(&self, arg: &str) -> Result<ModelSpec, CliError> {
        self.load("model", arg, builtin_model, parse_model)
    }

    pub fn platform(&self, arg: &str) -> Result<PlatformSpec, CliError> {
        self.load("platform", arg, builtin_platform, parse_platform)
    }

    pub fn schedule(&self, arg: &str) -> Result<RatioSchedule, CliError> {
        self.load("schedule", arg, builtin_schedule, parse_schedule)
    }
}

/// A number of GB/s or a tier label such as `4x`.
pub fn bandwidth(arg: &str) -> Result<f64, CliError> {
    let arg = arg.trim();
    if let Some(t) = BandwidthTier::parse(arg) {
        return Ok(t.gbps());
    }
    match arg.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(CliError::Input(format!(
            "bandwidth '{arg}' is neither a positive number nor one of 1x, 2x, 4x, 12x"
        ))),
    }
}

pub fn bandwidths(arg: &str) -> Result<Vec<f64>, CliError> {
    arg.split(',').filter(|s| !s.trim().is_empty()).map(bandwidth).collect()
}
