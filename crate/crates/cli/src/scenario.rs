// SPDX-License-Identifier: MIT OR Apache-2.0

//! Versioned scenario and parameter files (TOML, or JSON by extension).

use std::path::Path;

use polyseg::segment_cost::Engine;
use polyseg::signal_model::{LowerBoundParams, Template};
use polyseg::simulation::{LambdaRule, NoiseKind, SweepConfig};
use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::error::{CliError, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    pub signal: Template,
    pub noise: NoiseSection,
    #[serde(default)]
    pub solver: SolverSection,
    pub sweep: SweepSection,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct NoiseSection {
    #[serde(default)]
    pub kind: NoiseKind,
    pub sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SolverSection {
    /// Defaults to the template's degree.
    pub degree: Option<usize>,
    pub lambda: Option<f64>,
    /// Penalty rule `lambda = c sigma^2 ln n`.
    pub c: Option<f64>,
    #[serde(default = "one")]
    pub min_seg_len: usize,
    #[serde(default)]
    pub engine: Engine,
    #[serde(default = "one_f")]
    pub c_signal: f64,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct SweepSection {
    pub n_grid: Vec<usize>,
    pub reps: usize,
}

fn one() -> usize {
    1
}

fn one_f() -> f64 {
    1.0
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct LowerBoundFile {
    pub schema_version: u32,
    pub lowerbound: LowerBoundParams,
}

fn check_version(found: u32, path: &Path) -> Result<()> {
    if found != SCHEMA_VERSION {
        return Err(CliError::input(format!(
            "{}: schemaVersion {found} is not supported (expected {SCHEMA_VERSION})",
            path.display()
        )));
    }
    Ok(())
}

fn load<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let is_json = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let parsed = if is_json {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    } else {
        toml::from_str(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self> {
        let s: Scenario = load(path)?;
        check_version(s.schema_version, path)?;
        Ok(s)
    }

    pub fn sweep_config(&self) -> Result<SweepConfig> {
        let lambda = match (self.solver.lambda, self.solver.c) {
            (Some(l), None) => LambdaRule::Fixed(l),
            (None, Some(c)) => LambdaRule::NoiseScaled { c },
            _ => {
                return Err(CliError::input(
                    "solver: exactly one of `lambda` and `c` must be given",
                ))
            }
        };
        let mut cfg = SweepConfig::new(
            self.signal.clone(),
            self.sweep.n_grid.clone(),
            self.sweep.reps,
        );
        cfg.noise = self.noise.kind;
        cfg.sigma = self.noise.sigma;
        cfg.master_seed = self.noise.seed;
        cfg.lambda = lambda;
        cfg.degree = self.solver.degree.unwrap_or_else(|| self.signal.degree());
        cfg.min_seg_len = self.solver.min_seg_len;
        cfg.engine = self.solver.engine;
        cfg.c_signal = self.solver.c_signal;
        Ok(cfg)
    }
}

impl LowerBoundFile {
    pub fn load(path: &Path) -> Result<Self> {
        let f: LowerBoundFile = load(path)?;
        check_version(f.schema_version, path)?;
        Ok(f)
    }
}
