//! Experiment configuration.
//!
//! Configs are TOML files with the sections `[dataset]`, `[problem]`,
//! `[solver]` and the optional `[reference]` and `[sweep]`. Unknown keys are
//! rejected everywhere: a misspelt step-size constant must not silently fall
//! back to its default.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use gdro::data::CsvSchema;
use gdro::learners::Exp3pParams;
use gdro::problem::{LossKind, UncertaintySetSpec};
use gdro::solvers::{Algorithm, CheckpointSchedule};
use serde::{Deserialize, Serialize};

use crate::error::{io_err, CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub problem: ProblemConfig,
    pub solver: SolverSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<ReferenceConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DatasetConfig {
    Synthetic {
        groups: usize,
        dim: usize,
        #[serde(default = "default_points")]
        points_per_group: usize,
        #[serde(default = "default_flip")]
        flip_prob: f64,
        #[serde(default = "default_data_seed")]
        seed: u64,
    },
    Csv {
        /// Relative paths are resolved against the config file's directory.
        path: PathBuf,
        schema: CsvSchema,
    },
}

fn default_points() -> usize {
    1000
}

fn default_flip() -> f64 {
    0.1
}

fn default_data_seed() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub loss: LossKind,
    /// Radius of the Euclidean ball Θ.
    pub radius: f64,
    #[serde(default = "default_set")]
    pub set: UncertaintySetSpec,
}

fn default_set() -> UncertaintySetSpec {
    UncertaintySetSpec::Simplex
}

/// Step-size constants: `η_{θ,t} = c_theta·radius/√t`, `η_q = c_q √(log m/(mT))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tuning {
    pub c_theta: f64,
    pub c_q: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub algorithms: Vec<Algorithm>,
    pub iterations: u64,
    #[serde(default = "default_minibatch")]
    pub minibatch: usize,
    pub seeds: Vec<u64>,
    /// Constants used by algorithms without an entry in `tuning`.
    #[serde(default = "default_c_theta")]
    pub c_theta: f64,
    #[serde(default = "default_c_q")]
    pub c_q: f64,
    /// Per-algorithm constants, keyed by algorithm name.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub tuning: BTreeMap<String, Tuning>,
    #[serde(default)]
    pub checkpoints: CheckpointSchedule,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exp3p: Option<Exp3pParams>,
}

fn default_minibatch() -> usize {
    10
}

fn default_c_theta() -> f64 {
    0.1
}

fn default_c_q() -> f64 {
    1.0
}

impl SolverSection {
    pub fn tuning_for(&self, algorithm: Algorithm) -> Tuning {
        self.tuning.get(algorithm.name()).copied().unwrap_or(Tuning {
            c_theta: self.c_theta,
            c_q: self.c_q,
        })
    }
}

/// How the reference value for optimality gaps is obtained.
///
/// The value is the best robust objective among a deterministic
/// full-gradient run and, when `horizon_factor > 0`, every configured
/// algorithm run for `horizon_factor × iterations` on `seeds`. A `file`
/// produced by an earlier run replaces the computation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    #[serde(default = "default_fg_iterations")]
    pub full_gradient_iterations: u64,
    /// Full-gradient θ steps are `full_gradient_c_theta·radius/√t`.
    #[serde(default = "default_fg_c_theta")]
    pub full_gradient_c_theta: f64,
    #[serde(default = "default_fg_q_step")]
    pub full_gradient_q_step: f64,
    #[serde(default = "default_factor")]
    pub horizon_factor: u64,
    #[serde(default = "default_reference_seeds")]
    pub seeds: Vec<u64>,
}

fn default_fg_iterations() -> u64 {
    3000
}

fn default_fg_c_theta() -> f64 {
    0.1
}

fn default_fg_q_step() -> f64 {
    0.5
}

fn default_factor() -> u64 {
    10
}

fn default_reference_seeds() -> Vec<u64> {
    (10_000..10_005).collect()
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        Self {
            file: None,
            full_gradient_iterations: default_fg_iterations(),
            full_gradient_c_theta: default_fg_c_theta(),
            full_gradient_q_step: default_fg_q_step(),
            horizon_factor: default_factor(),
            seeds: default_reference_seeds(),
        }
    }
}

/// Log-spaced grid over `[lo, hi]` per axis, run at `iterations / horizon_divisor`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default = "default_sweep_theta")]
    pub c_theta: [f64; 2],
    #[serde(default = "default_sweep_q")]
    pub c_q: [f64; 2],
    #[serde(default = "default_points_per_axis")]
    pub points: usize,
    #[serde(default = "default_divisor")]
    pub horizon_divisor: u64,
    #[serde(default = "default_sweep_seeds")]
    pub seeds: Vec<u64>,
}

fn default_sweep_theta() -> [f64; 2] {
    [0.1, 5.0]
}

fn default_sweep_q() -> [f64; 2] {
    [0.1, 3.0]
}

fn default_points_per_axis() -> usize {
    3
}

fn default_divisor() -> u64 {
    4
}

fn default_sweep_seeds() -> Vec<u64> {
    vec![1000, 1001, 1002]
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            c_theta: default_sweep_theta(),
            c_q: default_sweep_q(),
            points: default_points_per_axis(),
            horizon_divisor: default_divisor(),
            seeds: default_sweep_seeds(),
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::Config(format!("{name} must be positive and finite, got {v}")))
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::parse(text, Path::new("<string>"))
    }

    /// Reads and validates a config file. Relative dataset and reference
    /// paths are made absolute against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let mut config = Self::parse(&text, path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        Ok(config)
    }

    fn parse(text: &str, path: &Path) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| CliError::ConfigParse {
            path: path.to_path_buf(),
            source: Box::new(e),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        if let DatasetConfig::Csv { path, .. } = &mut self.dataset {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
        if let Some(ReferenceConfig { file: Some(f), .. }) = &mut self.reference {
            if f.is_relative() {
                *f = base.join(&*f);
            }
        }
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if let DatasetConfig::Synthetic {
            groups,
            dim,
            points_per_group,
            flip_prob,
            ..
        } = &self.dataset
        {
            if *groups == 0 || *dim == 0 || *points_per_group == 0 {
                return Err(CliError::Config("dataset sizes must be positive".into()));
            }
            if !(0.0..0.5).contains(flip_prob) {
                return Err(CliError::Config(format!("flip_prob must lie in [0, 0.5), got {flip_prob}")));
            }
        }
        positive("problem.radius", self.problem.radius)?;
        let s = &self.solver;
        if s.algorithms.is_empty() {
            return Err(CliError::Config("solver.algorithms is empty".into()));
        }
        if s.seeds.is_empty() {
            return Err(CliError::Config("solver.seeds is empty".into()));
        }
        if s.iterations == 0 || s.minibatch == 0 {
            return Err(CliError::Config("solver.iterations and solver.minibatch must be positive".into()));
        }
        positive("solver.c_theta", s.c_theta)?;
        positive("solver.c_q", s.c_q)?;
        for (name, t) in &s.tuning {
            name.parse::<Algorithm>().map_err(|e| CliError::Config(format!("solver.tuning: {e}")))?;
            positive(&format!("solver.tuning.{name}.c_theta"), t.c_theta)?;
            positive(&format!("solver.tuning.{name}.c_q"), t.c_q)?;
        }
        if let Some(p) = s.exp3p {
            p.validate()?;
        }
        s.checkpoints.times(s.iterations)?;
        if !self.problem.set.is_simplex() {
            if let Some(a) = s.algorithms.iter().find(|a| a.simplex_only()) {
                return Err(CliError::Config(format!(
                    "{a} supports only the simplex; use omd-entropy or omd-tsallis for other sets"
                )));
            }
        }
        if let Some(r) = &self.reference {
            positive("reference.full_gradient_c_theta", r.full_gradient_c_theta)?;
            if !(r.full_gradient_q_step >= 0.0 && r.full_gradient_q_step.is_finite()) {
                return Err(CliError::Config("reference.full_gradient_q_step must be nonnegative".into()));
            }
            if r.file.is_none() && r.full_gradient_iterations == 0 && (r.horizon_factor == 0 || r.seeds.is_empty()) {
                return Err(CliError::Config("reference computes nothing".into()));
            }
        }
        if let Some(w) = &self.sweep {
            for (name, [lo, hi]) in [("c_theta", w.c_theta), ("c_q", w.c_q)] {
                positive(&format!("sweep.{name}"), lo)?;
                positive(&format!("sweep.{name}"), hi)?;
                if lo > hi {
                    return Err(CliError::Config(format!("sweep.{name} range is reversed")));
                }
            }
            if w.points < 2 {
                return Err(CliError::Config("sweep.points must be at least 2".into()));
            }
            if w.horizon_divisor == 0 || w.horizon_divisor > s.iterations {
                return Err(CliError::Config("sweep.horizon_divisor must lie in [1, iterations]".into()));
            }
            if w.seeds.is_empty() {
                return Err(CliError::Config("sweep.seeds is empty".into()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DESK: &str = r#"
[dataset]
kind = "synthetic"
groups = 10
dim = 50

[problem]
loss = "hinge"
radius = 10.0

[solver]
algorithms = ["gdro-exp3", "gdro-tinf", "sagawa"]
iterations = 200000
seeds = [0, 1, 2]

[solver.tuning.gdro-tinf]
c_theta = 0.5
c_q = 3.0
"#;

    #[test]
    fn defaults_fill_in() {
        let c = ExperimentConfig::from_toml_str(DESK).unwrap();
        assert_eq!(
            c.dataset,
            DatasetConfig::Synthetic {
                groups: 10,
                dim: 50,
                points_per_group: 1000,
                flip_prob: 0.1,
                seed: 1
            }
        );
        assert_eq!(c.problem.set, UncertaintySetSpec::Simplex);
        assert_eq!(c.solver.minibatch, 10);
        assert_eq!(c.solver.checkpoints, CheckpointSchedule::Geometric { ratio: 1.2 });
        assert_eq!(c.solver.tuning_for(Algorithm::GdroTinf), Tuning { c_theta: 0.5, c_q: 3.0 });
        assert_eq!(c.solver.tuning_for(Algorithm::SagawaBaseline), Tuning { c_theta: 0.1, c_q: 1.0 });
    }

    #[test]
    fn round_trip() {
        let c = ExperimentConfig::from_toml_str(DESK).unwrap();
        let mut full = c.clone();
        full.reference = Some(ReferenceConfig::default());
        full.sweep = Some(SweepConfig::default());
        full.problem.set = UncertaintySetSpec::Simplex;
        for cfg in [c, full] {
            let text = cfg.to_toml_string().unwrap();
            assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), cfg);
        }
    }

    #[test]
    fn unknown_keys_fail() {
        let typo = DESK.replace("iterations = 200000", "iterations = 200000\nc_tehta = 3.0");
        let err = ExperimentConfig::from_toml_str(&typo).unwrap_err().to_string();
        assert!(err.contains("c_tehta"), "{err}");
        let nested = DESK.replace("dim = 50", "dim = 50\npoints = 3");
        assert!(ExperimentConfig::from_toml_str(&nested).is_err());
    }

    #[test]
    fn invalid_values_fail() {
        for (from, to) in [
            ("radius = 10.0", "radius = -1.0"),
            ("seeds = [0, 1, 2]", "seeds = []"),
            ("\"sagawa\"]", "\"sagawa\", \"nope\"]"),
            ("c_q = 3.0", "c_q = 0.0"),
            ("[solver.tuning.gdro-tinf]", "[solver.tuning.gdro-tinff]"),
        ] {
            assert!(ExperimentConfig::from_toml_str(&DESK.replace(from, to)).is_err(), "{to}");
        }
        let kset = DESK.replace("radius = 10.0", "radius = 10.0\nset = { kind = \"k-set\", p = 0.5 }");
        assert!(ExperimentConfig::from_toml_str(&kset).is_err());
    }
}
