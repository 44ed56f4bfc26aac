//! Experiment harness around the `gdro` solvers: TOML configs, trajectory
//! CSVs with manifests, grid sweeps over step-size constants, the
//! lower-bound demonstration and standalone evaluation.

pub mod config;
pub mod error;
pub mod experiment;
pub mod format;
pub mod lb_demo;
pub mod sweep;

use std::path::Path;

use gdro::evaluation::{group_losses, optimality_gap, robust_objective, ReferenceSolution};
use serde::{Deserialize, Serialize};

pub use config::ExperimentConfig;
pub use error::{CliError, Result};
pub use experiment::{run_experiment, ExperimentOutcome, RunManifest};
pub use lb_demo::{lb_demo, LbDemoConfig, LbDemoReport};
pub use sweep::{sweep, sweep_to_dir, SweepReport};

use crate::error::io_err;
use crate::experiment::{load_dataset, prepare};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub group_names: Vec<String>,
    pub group_losses: Vec<f64>,
    pub objective: f64,
    pub gap: Option<f64>,
}

/// Exact group losses and robust objective of `theta` on the configured
/// problem, and its gap when a reference is given.
pub fn evaluate(
    config: &ExperimentConfig,
    theta: &[f64],
    reference: Option<&ReferenceSolution>,
) -> Result<EvalReport> {
    let prepared = prepare(config)?;
    let ds = &prepared.data.dataset;
    let losses = group_losses(config.problem.loss, theta, ds)?;
    let objective = robust_objective(&losses, &config.problem.set)?;
    let gap = reference
        .map(|r| optimality_gap(config.problem.loss, theta, ds, &config.problem.set, r, &prepared.key))
        .transpose()?;
    Ok(EvalReport {
        group_names: ds.group_names().to_vec(),
        group_losses: losses,
        objective,
        gap,
    })
}

/// Materializes the configured dataset as CSV and returns its fingerprint.
pub fn gen_data(config: &ExperimentConfig, out: &Path) -> Result<String> {
    let data = load_dataset(&config.dataset)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    data.dataset.write_csv(out)?;
    Ok(data.fingerprint)
}

/// Reads a JSON file holding either a bare array or an object with a
/// `theta` array.
pub fn read_theta(path: &Path) -> Result<Vec<f64>> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum ThetaFile {
        Bare(Vec<f64>),
        Wrapped { theta: Vec<f64> },
    }
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let parsed: ThetaFile = serde_json::from_str(&text).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(match parsed {
        ThetaFile::Bare(t) | ThetaFile::Wrapped { theta: t } => t,
    })
}

pub fn read_reference(path: &Path) -> Result<ReferenceSolution> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })
}
