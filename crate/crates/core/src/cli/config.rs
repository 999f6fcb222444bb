//! Run configuration: JSON file values overlaid by command-line flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::default_checkpoints;
use crate::model::ModelParams;
use crate::solver::PositivityPolicy;
use crate::stochastic::{make_grid, TimeGrid};

use super::CliError;

pub const DEFAULT_SEED: u64 = 42;
pub const SEED_ENV: &str = "VAREXP_SEED";
pub const DEFAULT_PATHS: usize = 5000;
pub const DEFAULT_HORIZON: f64 = 1.0;
pub const DEFAULT_DT: f64 = 0.001;
pub const DEFAULT_BINS: usize = 50;
pub const DEFAULT_MODEL: &str = "gm:p1";
pub const DEFAULT_EXPONENTS: [&str; 3] = ["p1", "p2", "p3"];
pub const DEFAULT_ORDERS: [u32; 3] = [2, 3, 4];
pub const DEFAULT_TRUNCATION_LEVEL: u32 = 10;
pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_KMAX: usize = 200;

/// Every key a config file may carry. Unknown keys are rejected.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub kappa: Option<f64>,
    pub theta: Option<f64>,
    pub xi: Option<f64>,
    pub v0: Option<f64>,
    pub model: Option<String>,
    pub exponent: Option<Vec<String>>,
    pub exponents: Option<Vec<String>>,
    pub seed: Option<u64>,
    pub paths: Option<usize>,
    pub dt: Option<f64>,
    #[serde(rename = "T")]
    pub horizon: Option<f64>,
    pub policy: Option<PositivityPolicy>,
    pub bins: Option<usize>,
    pub orders: Option<Vec<u32>>,
    pub checkpoints: Option<Vec<f64>>,
    pub out: Option<PathBuf>,
    pub dump_paths: Option<bool>,
    pub no_svg: Option<bool>,
    pub n: Option<u32>,
    pub epsilon: Option<f64>,
    pub tol: Option<f64>,
    pub kmax: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }
}

/// Seed precedence: flag, then config file, then `VAREXP_SEED`, then 42.
pub fn resolve_seed(flag: Option<u64>, file: Option<u64>) -> Result<u64, CliError> {
    if let Some(s) = flag.or(file) {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(raw) => raw
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("{SEED_ENV}={raw:?} is not a u64"))),
        Err(_) => Ok(DEFAULT_SEED),
    }
}

/// Fully resolved simulation settings, echoed verbatim into manifests.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub models: Vec<String>,
    pub params: ModelParams,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub dt: f64,
    pub paths: usize,
    pub seed: u64,
    pub policy: PositivityPolicy,
    /// Not echoed: artifacts must not depend on where they are written.
    #[serde(skip)]
    pub out: PathBuf,
    pub dump_paths: bool,
    pub svg: bool,
    pub bins: usize,
    pub orders: Vec<u32>,
    pub checkpoints: Vec<f64>,
}

impl RunConfig {
    pub fn grid(&self) -> Result<TimeGrid, CliError> {
        Ok(make_grid(self.horizon, self.dt)?)
    }

    /// Fills checkpoints from the grid when none were given and validates
    /// everything that does not need a model.
    pub fn finish(mut self) -> Result<Self, CliError> {
        self.params.validate()?;
        let grid = self.grid()?;
        if self.paths == 0 {
            return Err(CliError::Usage("--paths must be at least 1".into()));
        }
        if self.bins == 0 {
            return Err(CliError::Usage("--bins must be at least 1".into()));
        }
        if self.orders.iter().any(|&m| m < 1) {
            return Err(CliError::Usage("moment orders must be at least 1".into()));
        }
        if self.checkpoints.is_empty() {
            self.checkpoints = default_checkpoints(&grid);
        }
        for &t in &self.checkpoints {
            grid.index_of(t)?;
        }
        Ok(self)
    }
}
