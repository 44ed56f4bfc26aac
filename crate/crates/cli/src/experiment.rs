//! Running configured experiments and writing their artifacts.
//!
//! An output directory holds one trajectory CSV per (algorithm, seed) named
//! `<algorithm>_seed<seed>.csv`, the final averaged model of each run as
//! `<algorithm>_seed<seed>.theta.json`, `reference.json` when gaps are
//! reported, and `manifest.json`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use gdro::data::{gen_synthetic, load_csv_dataset, GroupedDataset, IngestReport};
use gdro::evaluation::{Provenance, ReferenceSolution};
use gdro::learners::StepSchedule;
use gdro::problem::ProblemConstants;
use gdro::solvers::{full_gradient_dynamics, run_solver, Algorithm, CheckpointSchedule, DroProblem, SolverConfig, Trajectory};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{DatasetConfig, ExperimentConfig, ReferenceConfig, Tuning};
use crate::error::{io_err, CliError, Result};
use crate::format::fmt_g12;

/// A loaded dataset with its content fingerprint.
#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub dataset: Arc<GroupedDataset>,
    /// Hex SHA-256 of the canonical byte encoding.
    pub fingerprint: String,
    pub ingest: Option<IngestReport>,
}

pub fn fingerprint(dataset: &GroupedDataset) -> String {
    let mut h = Sha256::new();
    dataset.visit_canonical_bytes(|b| h.update(b));
    hex::encode(h.finalize())
}

pub fn load_dataset(config: &DatasetConfig) -> Result<LoadedDataset> {
    let (dataset, ingest) = match config {
        DatasetConfig::Synthetic {
            groups,
            dim,
            points_per_group,
            flip_prob,
            seed,
        } => (gen_synthetic(*groups, *dim, *points_per_group, *flip_prob, *seed)?, None),
        DatasetConfig::Csv { path, schema } => {
            let (ds, report) = load_csv_dataset(path, schema)?;
            (ds, Some(report))
        }
    };
    Ok(LoadedDataset {
        fingerprint: fingerprint(&dataset),
        dataset: Arc::new(dataset),
        ingest,
    })
}

/// The dataset, loss, radius and uncertainty set ready to solve.
#[derive(Debug, Clone)]
pub struct PreparedProblem {
    pub data: LoadedDataset,
    pub problem: DroProblem,
    pub constants: ProblemConstants,
    /// Identifies the problem a reference value certifies.
    pub key: String,
}

pub fn prepare(config: &ExperimentConfig) -> Result<PreparedProblem> {
    let data = load_dataset(&config.dataset)?;
    let p = &config.problem;
    let problem = DroProblem::new(data.dataset.clone(), p.loss, p.radius, p.set.clone())?;
    let constants = problem.constants()?;
    let set = serde_json::to_string(&p.set).expect("uncertainty sets serialize");
    let key = format!("{}|{}|{}|{}", data.fingerprint, p.loss.name(), fmt_g12(p.radius)?, set);
    Ok(PreparedProblem {
        data,
        problem,
        constants,
        key,
    })
}

/// Solver configuration for one run of `algorithm` under `tuning`.
pub fn solver_config(
    config: &ExperimentConfig,
    groups: usize,
    algorithm: Algorithm,
    tuning: Tuning,
    iterations: u64,
    seed: u64,
) -> SolverConfig {
    let mut c = SolverConfig::tuned(
        algorithm,
        tuning.c_theta,
        tuning.c_q,
        config.problem.radius,
        groups,
        iterations,
        seed,
    );
    c.minibatch = config.solver.minibatch;
    c.checkpoints = config.solver.checkpoints;
    c.exp3p = config.solver.exp3p;
    c
}

/// Runs every `(algorithm, tuning, seed)` job in parallel; results come back
/// in job order.
pub fn run_jobs(problem: &DroProblem, jobs: &[SolverConfig]) -> Result<Vec<Trajectory>> {
    jobs.par_iter()
        .map(|c| run_solver(problem, c).map_err(CliError::from))
        .collect()
}

/// Computes (or loads) the reference solution for `prepared`.
pub fn compute_reference(
    config: &ExperimentConfig,
    reference: &ReferenceConfig,
    prepared: &PreparedProblem,
) -> Result<ReferenceSolution> {
    if let Some(path) = &reference.file {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let r: ReferenceSolution = serde_json::from_str(&text).map_err(|source| CliError::Json {
            path: path.clone(),
            source,
        })?;
        if r.provenance.problem_key != prepared.key {
            return Err(CliError::Config(format!(
                "reference file {} certifies a different problem",
                path.display()
            )));
        }
        return Ok(r);
    }
    let mut methods = Vec::new();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut consider = |value: f64, theta: &[f64]| {
        if best.as_ref().map_or(true, |(b, _)| value < *b) {
            best = Some((value, theta.to_vec()));
        }
    };
    if reference.full_gradient_iterations > 0 {
        let fg = full_gradient_dynamics(
            &prepared.problem,
            reference.full_gradient_iterations,
            StepSchedule::InverseSqrt(reference.full_gradient_c_theta * config.problem.radius),
            reference.full_gradient_q_step,
        )?;
        consider(fg.value, &fg.theta);
        methods.push(format!("full-gradient x{}", reference.full_gradient_iterations));
    }
    let horizon = config.solver.iterations * reference.horizon_factor;
    if reference.horizon_factor > 0 && !reference.seeds.is_empty() {
        let m = prepared.problem.dataset.num_groups();
        let mut jobs = Vec::new();
        for &a in &config.solver.algorithms {
            for &seed in &reference.seeds {
                let mut c = solver_config(config, m, a, config.solver.tuning_for(a), horizon, seed);
                c.checkpoints = CheckpointSchedule::Geometric { ratio: 1.5 };
                jobs.push(c);
            }
            methods.push(a.name().to_string());
        }
        for t in run_jobs(&prepared.problem, &jobs)? {
            let c = t.best_checkpoint();
            consider(c.objective, &c.average_theta);
        }
    }
    let (value, theta) = best.ok_or_else(|| CliError::Config("reference computes nothing".into()))?;
    Ok(ReferenceSolution {
        theta,
        value,
        provenance: Provenance {
            problem_key: prepared.key.clone(),
            methods,
            horizon,
            seeds: reference.seeds.clone(),
        },
    })
}

/// Trajectory CSV: `iteration,objective[,gap]`.
pub fn trajectory_csv(trajectory: &Trajectory) -> Result<String> {
    let with_gap = trajectory.checkpoints.iter().all(|c| c.gap.is_some());
    let mut out = String::from(if with_gap { "iteration,objective,gap\n" } else { "iteration,objective\n" });
    for c in &trajectory.checkpoints {
        write!(out, "{},{}", c.iteration, fmt_g12(c.objective)?).expect("string write");
        if with_gap {
            write!(out, ",{}", fmt_g12(c.gap.expect("checked"))?).expect("string write");
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn run_file_stem(algorithm: Algorithm, seed: u64) -> String {
    format!("{}_seed{seed}", algorithm.name())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub fingerprint: String,
    pub groups: usize,
    pub dim: usize,
    pub group_names: Vec<String>,
    pub group_sizes: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ingest: Option<IngestReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub tuning: Tuning,
    pub q_step: f64,
    pub trajectory_file: String,
    pub theta_file: String,
    pub final_objective: f64,
    pub final_gap: Option<f64>,
    /// `T_i`: iterations that queried group `i`.
    pub queries: Vec<u64>,
    pub clip_events: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub config: ExperimentConfig,
    pub dataset: DatasetSummary,
    pub constants: ProblemConstants,
    pub seeds: Vec<u64>,
    pub reference_value: Option<f64>,
    pub runs: Vec<RunSummary>,
    pub wall_clock_seconds: f64,
}

/// Everything a run produced, in memory.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub manifest: RunManifest,
    pub trajectories: Vec<Trajectory>,
    pub reference: Option<ReferenceSolution>,
    pub out_dir: PathBuf,
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(io_err(path))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    write_file(path, &(text + "\n"))
}

/// Runs every configured algorithm on every seed and writes the artifacts
/// to `out_dir` (created if missing).
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentOutcome> {
    config.validate()?;
    let start = Instant::now();
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let prepared = prepare(config)?;
    let m = prepared.problem.dataset.num_groups();

    let reference = match &config.reference {
        Some(r) => {
            let sol = compute_reference(config, r, &prepared)?;
            write_json(&out_dir.join("reference.json"), &sol)?;
            Some(sol)
        }
        None => None,
    };

    let mut jobs = Vec::new();
    for &a in &config.solver.algorithms {
        for &seed in &config.solver.seeds {
            let mut c = solver_config(config, m, a, config.solver.tuning_for(a), config.solver.iterations, seed);
            c.reference_value = reference.as_ref().map(|r| r.value);
            jobs.push(c);
        }
    }
    let trajectories = run_jobs(&prepared.problem, &jobs)?;

    let mut runs = Vec::with_capacity(trajectories.len());
    for (job, t) in jobs.iter().zip(&trajectories) {
        let stem = run_file_stem(t.algorithm, t.seed);
        let csv_name = format!("{stem}.csv");
        let theta_name = format!("{stem}.theta.json");
        write_file(&out_dir.join(&csv_name), &trajectory_csv(t)?)?;
        write_json(&out_dir.join(&theta_name), &t.last().average_theta)?;
        runs.push(RunSummary {
            algorithm: t.algorithm,
            seed: t.seed,
            tuning: config.solver.tuning_for(t.algorithm),
            q_step: job.q_step,
            trajectory_file: csv_name,
            theta_file: theta_name,
            final_objective: t.last().objective,
            final_gap: t.last().gap,
            queries: t.diagnostics.queries.clone(),
            clip_events: t.diagnostics.clip_events,
        });
    }

    let ds = &prepared.data.dataset;
    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        dataset: DatasetSummary {
            fingerprint: prepared.data.fingerprint.clone(),
            groups: ds.num_groups(),
            dim: ds.dim(),
            group_names: ds.group_names().to_vec(),
            group_sizes: ds.group_sizes(),
            ingest: prepared.data.ingest.clone(),
        },
        constants: prepared.constants,
        seeds: config.solver.seeds.clone(),
        reference_value: reference.as_ref().map(|r| r.value),
        runs,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    };
    write_json(&out_dir.join("manifest.json"), &manifest)?;
    Ok(ExperimentOutcome {
        manifest,
        trajectories,
        reference,
        out_dir: out_dir.to_path_buf(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        use gdro::solvers::{Checkpoint, Diagnostics};
        let cp = |iteration, objective, gap| Checkpoint {
            iteration,
            average_theta: vec![],
            objective,
            gap,
            q: vec![],
        };
        let mut t = Trajectory {
            algorithm: Algorithm::GdroTinf,
            seed: 3,
            checkpoints: vec![cp(1, 1.0, Some(0.25)), cp(2, 0.5 + 1e-13, Some(1.0 / 3.0))],
            diagnostics: Diagnostics::default(),
            rounds: None,
        };
        assert_eq!(trajectory_csv(&t).unwrap(), "iteration,objective,gap\n1,1,0.25\n2,0.5,0.333333333333\n");
        t.checkpoints.iter_mut().for_each(|c| c.gap = None);
        assert_eq!(trajectory_csv(&t).unwrap(), "iteration,objective\n1,1\n2,0.5\n");
        t.checkpoints[0].objective = f64::NAN;
        assert!(trajectory_csv(&t).is_err());
        assert_eq!(run_file_stem(Algorithm::SagawaBaseline, 7), "sagawa_seed7");
    }

    #[test]
    fn fingerprint_tracks_content() {
        let a = gen_synthetic(2, 3, 5, 0.1, 1).unwrap();
        let b = gen_synthetic(2, 3, 5, 0.1, 1).unwrap();
        let c = gen_synthetic(2, 3, 5, 0.1, 2).unwrap();
        assert_eq!(fingerprint(&a), fingerprint(&b));
        assert_ne!(fingerprint(&a), fingerprint(&c));
        assert_eq!(fingerprint(&a).len(), 64);
    }
}
