//! Empirical look at the two-point lower-bound family: run a solver on the
//! base and the perturbed instance and compare the achieved gaps with `δ/4`.

use gdro::lower_bound::{lb_gap, LowerBoundInstance, LowerBoundProblem};
use gdro::solvers::{run_solver, Algorithm, CheckpointSchedule, SolverConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LbDemoConfig {
    pub delta: f64,
    pub groups: usize,
    pub iterations: u64,
    pub algorithm: Algorithm,
    pub seed: u64,
    /// `η_{θ,t} = c_theta/√t` on `Θ = [0, 1]`.
    pub c_theta: f64,
    /// `η_q = c_q √(log m / (m T))`.
    pub c_q: f64,
}

impl LbDemoConfig {
    /// `δ = √(m/T)` (capped below 1/4), the scale at which the two instances
    /// stop being distinguishable.
    pub fn critical_delta(groups: usize, iterations: u64) -> f64 {
        (groups as f64 / iterations as f64).sqrt().min(0.2499)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LbInstanceReport {
    pub name: String,
    pub final_theta: f64,
    pub gap: f64,
    /// `T_i` per group; sums to `T`.
    pub queries: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LbDemoReport {
    pub config: LbDemoConfig,
    pub threshold: f64,
    pub instances: Vec<LbInstanceReport>,
}

impl LbDemoReport {
    /// Largest gap across the two instances, relative to `δ` (0 when `δ = 0`).
    pub fn max_gap_over_delta(&self) -> f64 {
        if self.config.delta == 0.0 {
            return 0.0;
        }
        self.instances.iter().map(|i| i.gap).fold(0.0, f64::max) / self.config.delta
    }
}

pub fn lb_demo(config: &LbDemoConfig) -> Result<LbDemoReport> {
    if !(config.c_theta > 0.0 && config.c_q > 0.0) {
        return Err(CliError::Config("lb-demo step constants must be positive".into()));
    }
    let base = LowerBoundInstance::base(config.groups, config.delta)?;
    let perturbed = LowerBoundInstance::perturbed(config.groups, config.delta, 0)?;
    let mut instances = Vec::new();
    for (name, inst) in [("P0", base), ("P1", perturbed)] {
        let problem = LowerBoundProblem::new(inst.clone());
        let mut c = SolverConfig::tuned(
            config.algorithm,
            config.c_theta,
            config.c_q,
            1.0,
            config.groups,
            config.iterations,
            config.seed,
        );
        c.minibatch = 1;
        c.checkpoints = CheckpointSchedule::Final;
        let t = run_solver(&problem, &c)?;
        let theta = t.last().average_theta[0];
        instances.push(LbInstanceReport {
            name: name.to_string(),
            final_theta: theta,
            gap: lb_gap(&inst, theta)?,
            queries: t.diagnostics.queries.clone(),
        });
    }
    Ok(LbDemoReport {
        config: config.clone(),
        threshold: config.delta / 4.0,
        instances,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(delta: f64) -> LbDemoConfig {
        LbDemoConfig {
            delta,
            groups: 4,
            iterations: 2000,
            algorithm: Algorithm::GdroTinf,
            seed: 1,
            c_theta: 1.0,
            c_q: 1.0,
        }
    }

    #[test]
    fn queries_sum_to_horizon() {
        let r = lb_demo(&cfg(0.1)).unwrap();
        assert_eq!(r.instances.len(), 2);
        for i in &r.instances {
            assert_eq!(i.queries.iter().sum::<u64>(), 2000);
            assert!(i.gap >= 0.0);
        }
        assert_eq!(r.threshold, 0.025);
    }

    #[test]
    fn zero_delta_has_no_gap() {
        let r = lb_demo(&cfg(0.0)).unwrap();
        assert!(r.instances.iter().all(|i| i.gap.abs() < 1e-12));
        assert_eq!(r.max_gap_over_delta(), 0.0);
    }

    #[test]
    fn critical_delta() {
        assert_eq!(LbDemoConfig::critical_delta(4, 400), 0.1);
        assert_eq!(LbDemoConfig::critical_delta(4, 4), 0.2499);
    }
}
