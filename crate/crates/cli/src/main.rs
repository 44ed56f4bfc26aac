use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use gdro::solvers::Algorithm;
use gdro_cli::{
    evaluate, gen_data, lb_demo, read_reference, read_theta, run_experiment, sweep_to_dir, ExperimentConfig,
    LbDemoConfig,
};

#[derive(Parser)]
#[command(name = "gdro", version, about = "Stochastic solvers for (generalized) group DRO")]
struct Cli {
    /// Worker threads for independent runs (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured algorithm and seed; write trajectories and a manifest.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Replace the configured solver seeds with this single seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Grid-search the step-size constants at a reduced horizon.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Replace the configured sweep seeds with this single seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a solver on the two lower-bound instances and report the gaps.
    LbDemo {
        /// Defaults to √(m/T).
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long, default_value_t = 4)]
        groups: usize,
        #[arg(long, default_value_t = 10_000)]
        iterations: u64,
        #[arg(long, default_value = "gdro-tinf")]
        algorithm: Algorithm,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1.0)]
        c_theta: f64,
        #[arg(long, default_value_t = 1.0)]
        c_q: f64,
        /// Also write the report as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the configured dataset as CSV.
    GenData {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the synthetic data seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a model file on the configured problem.
    Eval {
        #[arg(long)]
        config: PathBuf,
        /// JSON array, or an object with a `theta` array.
        #[arg(long)]
        theta: PathBuf,
        /// Reference solution for reporting the gap.
        #[arg(long)]
        reference: Option<PathBuf>,
    },
}

fn load(path: &PathBuf) -> Result<ExperimentConfig> {
    ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match cli.command {
        Command::Run { config, out, seed } => {
            let mut c = load(&config)?;
            if let Some(s) = seed {
                c.solver.seeds = vec![s];
            }
            let outcome = run_experiment(&c, &out)?;
            for r in &outcome.manifest.runs {
                match r.final_gap {
                    Some(g) => println!("{:<14} seed {:<6} objective {:.6}  gap {:.3e}", r.algorithm, r.seed, r.final_objective, g),
                    None => println!("{:<14} seed {:<6} objective {:.6}", r.algorithm, r.seed, r.final_objective),
                }
            }
            println!("wrote {}", out.display());
        }
        Command::Sweep { config, out, seed } => {
            let mut c = load(&config)?;
            if let Some(s) = seed {
                c.sweep.get_or_insert_with(Default::default).seeds = vec![s];
            }
            let report = sweep_to_dir(&c, &out)?;
            for (a, t, v) in &report.best {
                println!("{a:<14} c_theta {:.4}  c_q {:.4}  mean objective {v:.6}", t.c_theta, t.c_q);
            }
            println!("wrote {}", out.display());
        }
        Command::LbDemo {
            delta,
            groups,
            iterations,
            algorithm,
            seed,
            c_theta,
            c_q,
            out,
        } => {
            let config = LbDemoConfig {
                delta: delta.unwrap_or_else(|| LbDemoConfig::critical_delta(groups, iterations)),
                groups,
                iterations,
                algorithm,
                seed,
                c_theta,
                c_q,
            };
            let report = lb_demo(&config)?;
            println!("delta {:.6}  threshold delta/4 {:.6}", config.delta, report.threshold);
            for i in &report.instances {
                println!("{}: theta {:.6}  gap {:.6}  queries {:?}", i.name, i.final_theta, i.gap, i.queries);
            }
            if let Some(path) = out {
                std::fs::write(&path, serde_json::to_string_pretty(&report)? + "\n")
                    .with_context(|| format!("writing {}", path.display()))?;
            }
        }
        Command::GenData { config, out, seed } => {
            let mut c = load(&config)?;
            if let (Some(s), gdro_cli::config::DatasetConfig::Synthetic { seed: ds, .. }) = (seed, &mut c.dataset) {
                *ds = s;
            }
            let fp = gen_data(&c, &out)?;
            println!("wrote {} (sha256 {fp})", out.display());
        }
        Command::Eval {
            config,
            theta,
            reference,
        } => {
            let c = load(&config)?;
            let theta = read_theta(&theta)?;
            let reference = reference.map(|p| read_reference(&p)).transpose()?;
            let report = evaluate(&c, &theta, reference.as_ref())?;
            for (name, l) in report.group_names.iter().zip(&report.group_losses) {
                println!("{name:<24} {l:.9}");
            }
            println!("objective {:.9}", report.objective);
            if let Some(g) = report.gap {
                println!("gap {g:.3e}");
            }
        }
    }
    Ok(())
}
