//! The two-point lower-bound family on `Θ = [0, 1]`.
//!
//! Group `i < m` has loss `δ(1 − θ) + Z` and group `m` has loss `δθ + Z`,
//! with `Z ∼ Ber(μ_i)`. The base instance uses `μ = 1/2` everywhere; the
//! perturbed instance raises `μ_{i*}` to `1/2 + δ` for one `i* < m`. The two
//! are hard to tell apart from few samples of group `i*`, yet no single `θ`
//! is `δ/4`-optimal for both.

use rand::Rng;

use crate::error::{GdroError, Result};
use crate::problem::UncertaintySetSpec;
use crate::rng::StreamRng;
use crate::solvers::StochasticProblem;

#[derive(Debug, Clone, PartialEq)]
pub struct LowerBoundInstance {
    pub groups: usize,
    pub delta: f64,
    pub mu: Vec<f64>,
    /// Perturbed group (0-based, never the last one).
    pub star: Option<usize>,
    /// Multiplies every loss; `M = 2·scale`.
    pub scale: f64,
}

impl LowerBoundInstance {
    /// `μ = (1/2, …, 1/2)`.
    pub fn base(groups: usize, delta: f64) -> Result<Self> {
        Self::validate(groups, delta)?;
        Ok(Self {
            groups,
            delta,
            mu: vec![0.5; groups],
            star: None,
            scale: 1.0,
        })
    }

    /// `μ_{star} = 1/2 + δ`, all others `1/2`.
    pub fn perturbed(groups: usize, delta: f64, star: usize) -> Result<Self> {
        Self::validate(groups, delta)?;
        if star + 1 >= groups {
            return Err(GdroError::InvalidArgument(format!(
                "perturbed group must be below the last group, got {star} of {groups}"
            )));
        }
        let mut mu = vec![0.5; groups];
        mu[star] += delta;
        Ok(Self {
            groups,
            delta,
            mu,
            star: Some(star),
            scale: 1.0,
        })
    }

    pub fn with_scale(mut self, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(GdroError::InvalidArgument(format!("scale must be positive, got {scale}")));
        }
        self.scale = scale;
        Ok(self)
    }

    fn validate(groups: usize, delta: f64) -> Result<()> {
        if groups < 2 {
            return Err(GdroError::InvalidArgument("the instance needs at least two groups".into()));
        }
        if !(0.0..0.25).contains(&delta) {
            return Err(GdroError::InvalidArgument(format!(
                "delta must lie in [0, 1/4), got {delta}"
            )));
        }
        Ok(())
    }

    fn check(&self, group: usize, theta: f64) -> Result<()> {
        if group >= self.groups {
            return Err(GdroError::GroupOutOfRange {
                index: group,
                groups: self.groups,
            });
        }
        if !(0.0..=1.0).contains(&theta) {
            return Err(GdroError::InvalidArgument(format!("theta must lie in [0, 1], got {theta}")));
        }
        Ok(())
    }

    /// Deterministic part `δ(1 − θ)` or `δθ`, before scaling.
    fn linear_part(&self, group: usize, theta: f64) -> f64 {
        if group + 1 < self.groups {
            self.delta * (1.0 - theta)
        } else {
            self.delta * theta
        }
    }

    /// `d/dθ` of the loss of `group`.
    pub fn slope(&self, group: usize) -> f64 {
        if group + 1 < self.groups {
            -self.delta * self.scale
        } else {
            self.delta * self.scale
        }
    }
}

/// One realized loss of `group` at `θ`.
pub fn lb_sample<R: Rng + ?Sized>(
    inst: &LowerBoundInstance,
    group: usize,
    theta: f64,
    rng: &mut R,
) -> Result<f64> {
    inst.check(group, theta)?;
    let z = if rng.gen::<f64>() < inst.mu[group] { 1.0 } else { 0.0 };
    Ok(inst.scale * (inst.linear_part(group, theta) + z))
}

pub fn lb_expected_loss(inst: &LowerBoundInstance, group: usize, theta: f64) -> Result<f64> {
    inst.check(group, theta)?;
    Ok(inst.scale * (inst.linear_part(group, theta) + inst.mu[group]))
}

/// Worst expected group loss at `θ`.
pub fn lb_worst_group_loss(inst: &LowerBoundInstance, theta: f64) -> Result<f64> {
    (0..inst.groups).try_fold(f64::NEG_INFINITY, |acc, g| Ok(acc.max(lb_expected_loss(inst, g, theta)?)))
}

/// `(θ*, value)` of `min_θ max_i E ℓ_i(θ)` in closed form: the decreasing
/// envelope `δ(1 − θ) + max_{i<m} μ_i` meets `δθ + μ_m` at
/// `θ = (max_{i<m} μ_i − μ_m + δ)/(2δ)`, clamped to `[0, 1]`.
pub fn lb_minimax(inst: &LowerBoundInstance) -> (f64, f64) {
    let a = inst.mu[..inst.groups - 1].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let b = inst.mu[inst.groups - 1];
    let theta = if inst.delta > 0.0 {
        ((a - b + inst.delta) / (2.0 * inst.delta)).clamp(0.0, 1.0)
    } else {
        0.5
    };
    let value = lb_worst_group_loss(inst, theta).expect("theta in range");
    (theta, value)
}

/// Optimality gap `R(θ, P)` of `θ` on `inst`.
pub fn lb_gap(inst: &LowerBoundInstance, theta: f64) -> Result<f64> {
    Ok(lb_worst_group_loss(inst, theta)? - lb_minimax(inst).1)
}

fn grid(step: f64) -> impl Iterator<Item = f64> {
    let n = (1.0 / step).ceil() as usize;
    (0..=n).map(move |k| (k as f64 * step).min(1.0))
}

/// Minimax value of `inst` over a `θ` grid: `(argmin, value)`.
pub fn lb_minimax_value(inst: &LowerBoundInstance, grid_step: f64) -> Result<(f64, f64)> {
    if !(grid_step > 0.0) {
        return Err(GdroError::InvalidArgument("grid step must be positive".into()));
    }
    let mut best = (0.0, f64::INFINITY);
    for theta in grid(grid_step) {
        let v = lb_worst_group_loss(inst, theta)?;
        if v < best.1 {
            best = (theta, v);
        }
    }
    Ok(best)
}

/// `min_θ max{R(θ, P₀), R(θ, P₁)}` over a grid on `[0, 1]`.
pub fn lb_check_separation(delta: f64, star: usize, groups: usize, grid_step: f64) -> Result<f64> {
    if !(grid_step > 0.0) {
        return Err(GdroError::InvalidArgument("grid step must be positive".into()));
    }
    let p0 = LowerBoundInstance::base(groups, delta)?;
    let p1 = LowerBoundInstance::perturbed(groups, delta, star)?;
    let mut best = f64::INFINITY;
    for theta in grid(grid_step) {
        best = best.min(lb_gap(&p0, theta)?.max(lb_gap(&p1, theta)?));
    }
    Ok(best)
}

/// `KL(Ber(p) ‖ Ber(q))` for `p, q ∈ (0, 1)`.
pub fn kl_bernoulli(p: f64, q: f64) -> Result<f64> {
    let open = |x: f64| x > 0.0 && x < 1.0;
    if !open(p) || !open(q) {
        return Err(GdroError::InvalidArgument(format!(
            "Bernoulli parameters must lie in (0, 1), got {p} and {q}"
        )));
    }
    let kl = p * (p / q).ln() + (1.0 - p) * ((1.0 - p) / (1.0 - q)).ln();
    Ok(kl.max(0.0))
}

/// The instance as a stochastic problem over `Θ = [0, 1]` with the simplex
/// as uncertainty set. Iterates start at `θ = 1/2`.
#[derive(Debug, Clone)]
pub struct LowerBoundProblem {
    pub instance: LowerBoundInstance,
    spec: UncertaintySetSpec,
}

impl LowerBoundProblem {
    pub fn new(instance: LowerBoundInstance) -> Self {
        Self {
            instance,
            spec: UncertaintySetSpec::Simplex,
        }
    }
}

impl StochasticProblem for LowerBoundProblem {
    fn num_groups(&self) -> usize {
        self.instance.groups
    }

    fn dim(&self) -> usize {
        1
    }

    fn spec(&self) -> &UncertaintySetSpec {
        &self.spec
    }

    fn initial_theta(&self) -> Vec<f64> {
        vec![0.5]
    }

    fn project(&self, theta: &mut [f64]) {
        theta[0] = theta[0].clamp(0.0, 1.0);
    }

    fn sample_loss_grad(
        &self,
        group: usize,
        theta: &[f64],
        batch: usize,
        rng: &mut StreamRng,
        grad: &mut [f64],
    ) -> Result<f64> {
        let mut total = 0.0;
        for _ in 0..batch {
            total += lb_sample(&self.instance, group, theta[0], rng)?;
        }
        grad[0] = self.instance.slope(group);
        Ok(total / batch as f64)
    }

    fn group_losses(&self, theta: &[f64]) -> Result<Vec<f64>> {
        (0..self.instance.groups)
            .map(|g| lb_expected_loss(&self.instance, g, theta[0]))
            .collect()
    }

    fn group_losses_and_grads(&self, theta: &[f64]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let l = self.group_losses(theta)?;
        let g = (0..self.instance.groups).map(|i| vec![self.instance.slope(i)]).collect();
        Ok((l, g))
    }
}
