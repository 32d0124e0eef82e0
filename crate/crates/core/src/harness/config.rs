use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dynamics::{default_dt, DataRegime, InitialSpec, DEFAULT_BLOWUP_H3};
use crate::error::{Error, Result};
use crate::lp::NormParams;
use crate::spectral::TorusGrid;

/// Environment variable that overrides the output root.
pub const OUTPUT_ENV: &str = "EPSIM_OUT";

/// One simulation run.
///
/// ```json
/// {"R": 8, "n": 64, "epsilon": 0.01, "N": 7, "M": 2, "dt": 0.005,
///  "t_max": 10, "seed": 1, "snapshot_every": 10, "output_dir": "run"}
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(rename = "R")]
    pub side: f64,
    pub n: usize,
    pub epsilon: f64,
    #[serde(rename = "N", default = "default_sobolev")]
    pub sobolev: u32,
    #[serde(rename = "M", default = "default_weight")]
    pub weight: u32,
    /// `None` picks a stable step from the grid.
    #[serde(default)]
    pub dt: Option<f64>,
    pub t_max: f64,
    #[serde(default)]
    pub seed: u64,
    /// Steps between snapshots and diagnostics rows; 0 disables snapshots.
    #[serde(default = "default_snapshot_every")]
    pub snapshot_every: usize,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub regime: DataRegime,
    #[serde(default = "default_blowup")]
    pub blowup_h3: f64,
}

fn default_sobolev() -> u32 {
    7
}

fn default_weight() -> u32 {
    2
}

fn default_snapshot_every() -> usize {
    10
}

fn default_output() -> PathBuf {
    PathBuf::from("run")
}

fn default_blowup() -> f64 {
    DEFAULT_BLOWUP_H3
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            side: 8.0,
            n: 64,
            epsilon: 0.01,
            sobolev: default_sobolev(),
            weight: default_weight(),
            dt: Some(5e-3),
            t_max: 10.0,
            seed: 1,
            snapshot_every: default_snapshot_every(),
            output_dir: default_output(),
            regime: DataRegime::Sobolev,
            blowup_h3: default_blowup(),
        }
    }
}

impl RunConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let cfg: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        TorusGrid::new(self.side, self.n)?;
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidArgument(format!("epsilon must be >= 0, got {}", self.epsilon)));
        }
        if !(self.t_max >= 0.0 && self.t_max.is_finite()) {
            return Err(Error::InvalidArgument(format!("t_max must be >= 0, got {}", self.t_max)));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
            }
        }
        if !(self.blowup_h3 > 0.0) {
            return Err(Error::InvalidArgument(format!("blow-up threshold must be positive, got {}", self.blowup_h3)));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<TorusGrid> {
        TorusGrid::new(self.side, self.n)
    }

    pub fn params(&self) -> NormParams {
        NormParams::new(self.sobolev, self.weight)
    }

    pub fn time_step(&self, grid: &TorusGrid) -> f64 {
        self.dt.unwrap_or_else(|| default_dt(grid))
    }

    /// Number of steps, rounded to the nearest whole step.
    pub fn steps(&self, grid: &TorusGrid) -> usize {
        (self.t_max / self.time_step(grid)).round() as usize
    }

    pub fn initial_spec(&self) -> InitialSpec {
        InitialSpec { epsilon: self.epsilon, seed: self.seed, params: self.params(), regime: self.regime }
    }
}

/// Resolves an output directory. Relative paths are taken against `$EPSIM_OUT`
/// when it is set, otherwise against the working directory.
pub fn resolve_output(path: &Path) -> PathBuf {
    match std::env::var_os(OUTPUT_ENV) {
        Some(root) if path.is_relative() && !root.is_empty() => PathBuf::from(root).join(path),
        _ => path.to_path_buf(),
    }
}
