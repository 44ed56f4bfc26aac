//! Deterministic grid search over the step-size constants.

use std::fmt::Write as _;
use std::path::Path;

use gdro::solvers::{Algorithm, CheckpointSchedule};
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, SweepConfig, Tuning};
use crate::error::{io_err, CliError, Result};
use crate::experiment::{prepare, run_jobs, solver_config, write_file, write_json};
use crate::format::fmt_g12;

/// `points` log-spaced values from `lo` to `hi`, deduplicated.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let mut out: Vec<f64> = if points <= 1 || lo == hi {
        vec![lo]
    } else {
        (0..points)
            .map(|k| {
                if k + 1 == points {
                    hi
                } else {
                    lo * (hi / lo).powf(k as f64 / (points - 1) as f64)
                }
            })
            .collect()
    };
    out.dedup();
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub algorithm: Algorithm,
    pub tuning: Tuning,
    /// Final objective of the averaged iterate, per sweep seed.
    pub finals: Vec<f64>,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub sweep: SweepConfig,
    pub horizon: u64,
    pub points: Vec<GridPoint>,
    /// Winning constants per algorithm, in configuration order.
    pub best: Vec<(Algorithm, Tuning, f64)>,
}

impl SweepReport {
    /// `config` with the winners written into `solver.tuning`.
    pub fn apply(&self, config: &ExperimentConfig) -> ExperimentConfig {
        let mut out = config.clone();
        for (a, t, _) in &self.best {
            out.solver.tuning.insert(a.name().to_string(), *t);
        }
        out
    }

    /// Ranking table: one row per grid point, best first within each algorithm.
    pub fn ranking_csv(&self) -> Result<String> {
        let mut out = String::from("algorithm,rank,c_theta,c_q,mean_objective\n");
        for (a, _, _) in &self.best {
            let mut rows: Vec<&GridPoint> = self.points.iter().filter(|p| p.algorithm == *a).collect();
            rows.sort_by(|x, y| x.mean.total_cmp(&y.mean));
            for (rank, p) in rows.iter().enumerate() {
                writeln!(
                    out,
                    "{},{},{},{},{}",
                    a.name(),
                    rank + 1,
                    fmt_g12(p.tuning.c_theta)?,
                    fmt_g12(p.tuning.c_q)?,
                    fmt_g12(p.mean)?
                )
                .expect("string write");
            }
        }
        Ok(out)
    }
}

/// Runs the `[sweep]` grid (defaults when the section is absent) for every
/// configured algorithm at `iterations / horizon_divisor` and selects, per
/// algorithm, the constants with the lowest mean final objective over the
/// sweep seeds. Ties keep the earlier grid point.
pub fn sweep(config: &ExperimentConfig) -> Result<SweepReport> {
    config.validate()?;
    let grid = config.sweep.clone().unwrap_or_default();
    let prepared = prepare(config)?;
    let m = prepared.problem.dataset.num_groups();
    let horizon = (config.solver.iterations / grid.horizon_divisor).max(1);
    let thetas = log_grid(grid.c_theta[0], grid.c_theta[1], grid.points);
    let qs = log_grid(grid.c_q[0], grid.c_q[1], grid.points);

    let mut cells = Vec::new();
    let mut jobs = Vec::new();
    for &a in &config.solver.algorithms {
        for &c_theta in &thetas {
            for &c_q in &qs {
                let tuning = Tuning { c_theta, c_q };
                cells.push((a, tuning));
                for &seed in &grid.seeds {
                    let mut c = solver_config(config, m, a, tuning, horizon, seed);
                    c.checkpoints = CheckpointSchedule::Final;
                    jobs.push(c);
                }
            }
        }
    }
    let trajectories = run_jobs(&prepared.problem, &jobs)?;
    let per_cell = grid.seeds.len();
    let points: Vec<GridPoint> = cells
        .iter()
        .zip(trajectories.chunks(per_cell))
        .map(|(&(algorithm, tuning), runs)| {
            let finals: Vec<f64> = runs.iter().map(|t| t.last().objective).collect();
            let mean = finals.iter().sum::<f64>() / finals.len() as f64;
            GridPoint {
                algorithm,
                tuning,
                finals,
                mean,
            }
        })
        .collect();
    let mut best = Vec::new();
    for &a in &config.solver.algorithms {
        let winner = points
            .iter()
            .filter(|p| p.algorithm == a)
            .fold(None::<&GridPoint>, |acc, p| match acc {
                Some(b) if b.mean <= p.mean => Some(b),
                _ => Some(p),
            })
            .ok_or_else(|| CliError::Config("empty sweep grid".into()))?;
        best.push((a, winner.tuning, winner.mean));
    }
    Ok(SweepReport {
        sweep: grid,
        horizon,
        points,
        best,
    })
}

/// Runs [`sweep`] and writes `sweep_ranking.csv`, `sweep.json` and
/// `tuned.toml` (the input config with the winners filled in) to `out_dir`.
pub fn sweep_to_dir(config: &ExperimentConfig, out_dir: &Path) -> Result<SweepReport> {
    let report = sweep(config)?;
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    write_file(&out_dir.join("sweep_ranking.csv"), &report.ranking_csv()?)?;
    write_json(&out_dir.join("sweep.json"), &report)?;
    write_file(&out_dir.join("tuned.toml"), &report.apply(config).to_toml_string()?)?;
    Ok(report)
}
