//! JSON run configuration and precedence: flags, then file, then defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Seed fallback when neither a flag nor the config file sets one.
pub const SEED_ENV: &str = "CONTOUR_OPT_SEED";

/// `ζ` as given by the user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ZetaArg {
    Value(f64),
    /// Only the string `"auto"` is accepted.
    Keyword(String),
}

impl ZetaArg {
    pub fn parse(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(ZetaArg::Keyword("auto".into()));
        }
        s.parse::<f64>().map(ZetaArg::Value).map_err(|_| format!("expected a number or `auto`, got {s:?}"))
    }

    pub fn is_auto(&self) -> Result<bool, CliError> {
        match self {
            ZetaArg::Value(_) => Ok(false),
            ZetaArg::Keyword(k) if k.eq_ignore_ascii_case("auto") => Ok(true),
            ZetaArg::Keyword(k) => Err(CliError::usage(format!("zeta must be a number or \"auto\", got {k:?}"))),
        }
    }
}

/// Every setting a config file may carry. Unknown keys are rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub data: Option<PathBuf>,
    pub integer_cols: Option<usize>,
    pub case: Option<String>,
    pub alpha: Option<f64>,
    pub rho: Option<f64>,
    pub eta: Option<f64>,
    pub zeta: Option<ZetaArg>,
    pub zeta_grid: Option<Vec<f64>>,
    pub b_bar: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub trials: Option<usize>,
    pub eps_abs: Option<f64>,
    pub eps_rel: Option<f64>,
    pub max_iter: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::usage(format!("config file {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::usage(format!("config file {}: {e}", path.display())))
    }
}

/// First of flag, file value, default.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

/// Seed from flag, file, then the environment; randomized commands need one.
pub fn seed(flag: Option<u64>, file: Option<u64>) -> Result<u64, CliError> {
    if let Some(s) = flag.or(file) {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().map_err(|_| CliError::usage(format!("{SEED_ENV} must be an unsigned integer, got {v:?}"))),
        Err(_) => Err(CliError::usage(format!("a seed is required: pass --seed, set \"seed\" in the config file, or set {SEED_ENV}"))),
    }
}

pub fn probability(name: &str, v: f64) -> Result<f64, CliError> {
    if (0.0..1.0).contains(&v) {
        Ok(v)
    } else {
        Err(CliError::usage(format!("{name} must lie in [0, 1), got {v}")))
    }
}
