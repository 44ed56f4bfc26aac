//! Single-step online learners.
//!
//! The model player runs projected online gradient descent. The weight player
//! maximizes, so its updates take nonnegative *rewards*: Hedge (the EXP3
//! update), Tsallis-INF and EXP3P. Loss-driven twins of the Hedge and
//! Tsallis-INF steps are provided for bandit regret checks, where the
//! standard bounds are stated for nonnegative losses.

use serde::{Deserialize, Serialize};

use crate::error::{GdroError, Result};
use crate::geometry::{
    entropy_simplex_project_log, project_dual_onto_permutahedron, tsallis_project_dual, Regularizer,
    WeightVector, TSALLIS_TOL,
};
use crate::problem::{dot, project_ball_in_place, ModelParams};

/// Tsallis update factors `1 − η·gain·√q_i` below this are clamped.
pub const TSALLIS_CLIP: f64 = 1e-6;

/// Step-size schedule `η_t` for `t = 1, 2, …`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "kebab-case")]
pub enum StepSchedule {
    Fixed(f64),
    /// `c / √t`
    InverseSqrt(f64),
}

impl StepSchedule {
    pub fn validate(&self) -> Result<()> {
        let v = match self {
            StepSchedule::Fixed(v) | StepSchedule::InverseSqrt(v) => *v,
        };
        if !(v > 0.0 && v.is_finite()) {
            return Err(GdroError::InvalidArgument(format!(
                "step size must be positive and finite, got {v}"
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn at(&self, t: u64) -> f64 {
        debug_assert!(t >= 1);
        match *self {
            StepSchedule::Fixed(eta) => eta,
            StepSchedule::InverseSqrt(c) => c / (t as f64).sqrt(),
        }
    }
}

/// Sparse gradient estimate `value · e_index` fed to the weight player.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SparseLossEstimate {
    pub index: usize,
    pub value: f64,
}

impl SparseLossEstimate {
    pub fn new(index: usize, value: f64) -> Self {
        Self { index, value }
    }

    fn check(&self, m: usize) -> Result<()> {
        if self.index >= m {
            return Err(GdroError::GroupOutOfRange {
                index: self.index,
                groups: m,
            });
        }
        if !(self.value >= 0.0 && self.value.is_finite()) {
            return Err(GdroError::InvalidArgument(format!(
                "loss estimate must be finite and nonnegative, got {}",
                self.value
            )));
        }
        Ok(())
    }
}

/// In-place OGD step `θ ← proj(θ − η g)`.
pub fn ogd_step_in_place(theta: &mut [f64], grad: &[f64], eta: f64, radius: f64) {
    for (t, g) in theta.iter_mut().zip(grad) {
        *t -= eta * g;
    }
    project_ball_in_place(theta, radius);
}

pub fn ogd_step(theta: &ModelParams, grad: &[f64], eta: f64, radius: f64) -> Result<ModelParams> {
    if grad.len() != theta.dim() {
        return Err(GdroError::DimensionMismatch {
            expected: theta.dim(),
            got: grad.len(),
        });
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(GdroError::NonFinite("gradient"));
    }
    if !(eta > 0.0) {
        return Err(GdroError::InvalidArgument(format!("step size must be positive, got {eta}")));
    }
    let mut next = theta.theta.clone();
    ogd_step_in_place(&mut next, grad, eta, radius);
    Ok(ModelParams::from(next))
}

fn log_weights(q: &WeightVector) -> Vec<f64> {
    q.as_slice().iter().map(|v| v.ln()).collect()
}

/// Hedge (EXP3) reward step: `q̃ = q · exp(η v e_i)`, then normalize. Done in
/// log space so large importance weights cannot overflow.
pub fn hedge_step(q: &WeightVector, est: SparseLossEstimate, eta: f64) -> Result<WeightVector> {
    est.check(q.len())?;
    let mut lw = log_weights(q);
    lw[est.index] += eta * est.value;
    entropy_simplex_project_log(&lw)
}

/// Hedge step for a loss estimate: `q̃ = q · exp(−η v e_i)`.
pub fn hedge_loss_step(q: &WeightVector, est: SparseLossEstimate, eta: f64) -> Result<WeightVector> {
    est.check(q.len())?;
    let mut lw = log_weights(q);
    lw[est.index] -= eta * est.value;
    entropy_simplex_project_log(&lw)
}

/// Result of a Tsallis-INF step.
#[derive(Debug, Clone)]
pub struct TinfOutcome {
    pub q: WeightVector,
    /// Normalizer of the projection, reusable as a warm start.
    pub alpha: f64,
    /// Whether the update factor had to be clamped at [`TSALLIS_CLIP`].
    pub clipped: bool,
}

/// Tsallis-INF step with signed gain (`+` reward, `−` loss) on one index.
///
/// In dual coordinates `c = q^{-1/2}` the step is `c_i ← c_i − η·gain`, i.e.
/// `q̃_i = q_i (1 − η·gain·√q_i)^{-2}`.
fn tinf_signed(
    q: &WeightVector,
    index: usize,
    gain: f64,
    eta: f64,
    tol: f64,
    warm: Option<f64>,
) -> Result<TinfOutcome> {
    let mut c: Vec<f64> = q.as_slice().iter().map(|v| 1.0 / v.sqrt()).collect();
    let qi = q.get(index);
    let mut factor = 1.0 - eta * gain * qi.sqrt();
    let clipped = factor < TSALLIS_CLIP;
    if clipped {
        factor = TSALLIS_CLIP;
    }
    c[index] = factor / qi.sqrt();
    let (q, alpha) = tsallis_project_dual(&c, tol, warm)?;
    Ok(TinfOutcome { q, alpha, clipped })
}

/// Tsallis-INF reward step: `q̃_i = q_i (1 − η ℓ/√q_i)^{-2}` where
/// `est.value = ℓ/q_i`, followed by the Tsallis projection.
pub fn tinf_step(
    q: &WeightVector,
    est: SparseLossEstimate,
    eta: f64,
    tol: f64,
    warm: Option<f64>,
) -> Result<TinfOutcome> {
    est.check(q.len())?;
    tinf_signed(q, est.index, est.value, eta, tol, warm)
}

/// Tsallis-INF step for a loss estimate (factor `1 + η v √q_i`, no pole).
pub fn tinf_loss_step(
    q: &WeightVector,
    est: SparseLossEstimate,
    eta: f64,
    tol: f64,
    warm: Option<f64>,
) -> Result<TinfOutcome> {
    est.check(q.len())?;
    tinf_signed(q, est.index, -est.value, eta, tol, warm)
}

/// Mixing and bias parameters of EXP3P.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Exp3pParams {
    pub gamma: f64,
    pub beta: f64,
}

impl Exp3pParams {
    /// `γ = min(1, √(m log m / T))`, `β = √(log m / (m T))`.
    pub fn default_for(groups: usize, horizon: u64) -> Self {
        let m = groups as f64;
        let t = horizon.max(1) as f64;
        let lm = m.ln();
        Self {
            gamma: (m * lm / t).sqrt().min(1.0),
            beta: (lm / (m * t)).sqrt(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) || !(self.beta >= 0.0) {
            return Err(GdroError::InvalidArgument(format!(
                "EXP3P parameters out of range: gamma={} beta={}",
                self.gamma, self.beta
            )));
        }
        Ok(())
    }
}

/// `(1 − γ) q + γ/m`.
pub fn mix_uniform(q: &WeightVector, gamma: f64) -> WeightVector {
    let m = q.len() as f64;
    WeightVector::from_unnormalized(
        q.as_slice()
            .iter()
            .map(|v| (1.0 - gamma) * v + gamma / m)
            .collect(),
    )
}

/// One EXP3P step on the unmixed weights `base`.
///
/// The played distribution is `p = mix(base, γ)`; every arm `j` receives the
/// bias `β/p_j` on top of the sampled reward estimate. Returns the updated
/// unmixed weights and the next played distribution, whose entries are all
/// at least `γ/m`.
pub fn exp3p_step(
    base: &WeightVector,
    est: SparseLossEstimate,
    eta: f64,
    params: Exp3pParams,
) -> Result<(WeightVector, WeightVector)> {
    est.check(base.len())?;
    params.validate()?;
    let played = mix_uniform(base, params.gamma);
    let mut lw = log_weights(base);
    if params.beta > 0.0 {
        for (l, p) in lw.iter_mut().zip(played.as_slice()) {
            *l += eta * params.beta / p;
        }
    }
    lw[est.index] += eta * est.value;
    let next = entropy_simplex_project_log(&lw)?;
    let mixed = mix_uniform(&next, params.gamma);
    Ok((next, mixed))
}

/// Stateful weight-player learners as used inside the solvers.
#[derive(Debug, Clone)]
pub(crate) enum WeightLearner {
    /// Hedge on re-centred log-weights.
    Hedge { log_w: Vec<f64>, q: WeightVector },
    Tinf { q: WeightVector, alpha: Option<f64> },
    Exp3p {
        log_w: Vec<f64>,
        params: Exp3pParams,
        played: WeightVector,
    },
    /// Mirror step through `∇Ψ`, then a Bregman projection onto the
    /// permutahedron with rank weights `weights`.
    Omd {
        reg: Regularizer,
        weights: Vec<f64>,
        q: WeightVector,
    },
}

impl WeightLearner {
    pub(crate) fn hedge(m: usize) -> Self {
        WeightLearner::Hedge {
            log_w: vec![0.0; m],
            q: WeightVector::uniform(m),
        }
    }

    pub(crate) fn tinf(m: usize) -> Self {
        WeightLearner::Tinf {
            q: WeightVector::uniform(m),
            alpha: None,
        }
    }

    pub(crate) fn exp3p(m: usize, params: Exp3pParams) -> Self {
        WeightLearner::Exp3p {
            log_w: vec![0.0; m],
            params,
            played: WeightVector::uniform(m),
        }
    }

    /// Starts at the uniform vector, which lies in every permutahedron.
    pub(crate) fn omd(reg: Regularizer, weights: Vec<f64>) -> Self {
        let m = weights.len();
        WeightLearner::Omd {
            reg,
            weights,
            q: WeightVector::uniform(m),
        }
    }

    /// Distribution the groups are sampled from.
    pub(crate) fn played(&self) -> &WeightVector {
        match self {
            WeightLearner::Hedge { q, .. }
            | WeightLearner::Tinf { q, .. }
            | WeightLearner::Omd { q, .. } => q,
            WeightLearner::Exp3p { played, .. } => played,
        }
    }

    /// Applies a reward estimate; returns whether a Tsallis clip occurred.
    pub(crate) fn update(&mut self, est: SparseLossEstimate, eta: f64) -> Result<bool> {
        match self {
            WeightLearner::Hedge { log_w, q } => {
                if est.value > 0.0 {
                    log_w[est.index] += eta * est.value;
                    recentre(log_w);
                    *q = entropy_simplex_project_log(log_w)?;
                }
                Ok(false)
            }
            WeightLearner::Tinf { q, alpha } => {
                if est.value == 0.0 {
                    return Ok(false);
                }
                let out = tinf_step(q, est, eta, TSALLIS_TOL, *alpha)?;
                *q = out.q;
                *alpha = Some(out.alpha);
                Ok(out.clipped)
            }
            WeightLearner::Exp3p {
                log_w,
                params,
                played,
            } => {
                if params.beta > 0.0 {
                    for (l, p) in log_w.iter_mut().zip(played.as_slice()) {
                        *l += eta * params.beta / p;
                    }
                }
                log_w[est.index] += eta * est.value;
                recentre(log_w);
                let base = entropy_simplex_project_log(log_w)?;
                *played = mix_uniform(&base, params.gamma);
                Ok(false)
            }
            WeightLearner::Omd { reg, weights, q } => {
                if est.value == 0.0 {
                    return Ok(false);
                }
                let mut dual: Vec<f64> = q.as_slice().iter().map(|&v| reg.link(v)).collect();
                let mut clipped = false;
                let i = est.index;
                if *reg == Regularizer::Tsallis {
                    // dual_i = −c_i becomes −c_i·(1 − η v / c_i); keep the factor positive
                    let c = -dual[i];
                    let mut factor = 1.0 - eta * est.value / c;
                    if factor < TSALLIS_CLIP {
                        factor = TSALLIS_CLIP;
                        clipped = true;
                    }
                    dual[i] = -c * factor;
                } else {
                    dual[i] += eta * est.value;
                }
                *q = project_dual_onto_permutahedron(&dual, weights, *reg, TSALLIS_TOL)?;
                Ok(clipped)
            }
        }
    }

    /// Full-information step with a reward vector (all coordinates).
    pub(crate) fn update_full(&mut self, rewards: &[f64], eta: f64) -> Result<()> {
        let (reg, weights, q) = match self {
            WeightLearner::Omd { reg, weights, q } => (*reg, weights, q),
            _ => {
                return Err(GdroError::Unsupported(
                    "full-information updates need the generic mirror learner".into(),
                ))
            }
        };
        let dual: Vec<f64> = q
            .as_slice()
            .iter()
            .zip(rewards)
            .map(|(&v, r)| {
                let d = reg.link(v) + eta * r;
                if reg == Regularizer::Tsallis {
                    d.min(reg.link(v) * TSALLIS_CLIP)
                } else {
                    d
                }
            })
            .collect();
        *q = project_dual_onto_permutahedron(&dual, weights, reg, TSALLIS_TOL)?;
        Ok(())
    }
}

fn recentre(log_w: &mut [f64]) {
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    for l in log_w.iter_mut() {
        *l -= max;
    }
}

/// One round of an online learner as seen by the regret audit.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub iterate: Vec<f64>,
    /// Gradient of the round's linear loss.
    pub gradient: Vec<f64>,
    pub step: f64,
}

/// `Σ_t ⟨g_t, x_t⟩ − Σ_t ⟨g_t, comparator⟩` for the linearized losses.
pub fn regret_audit(trace: &[RoundRecord], comparator: &[f64]) -> f64 {
    trace
        .iter()
        .map(|r| dot(&r.gradient, &r.iterate) - dot(&r.gradient, comparator))
        .sum()
}

/// Regret against the best vertex of the simplex (the best fixed arm).
pub fn simplex_regret(trace: &[RoundRecord]) -> f64 {
    let Some(first) = trace.first() else {
        return 0.0;
    };
    let m = first.gradient.len();
    let mut cumulative = vec![0.0; m];
    for r in trace {
        for (c, g) in cumulative.iter_mut().zip(&r.gradient) {
            *c += g;
        }
    }
    let best = (0..m)
        .min_by(|&a, &b| cumulative[a].total_cmp(&cumulative[b]))
        .expect("nonempty");
    let mut e = vec![0.0; m];
    e[best] = 1.0;
    regret_audit(trace, &e)
}

/// `½ Σ η_t ‖g_t‖² + D² / (2 η_T)`: the OGD regret bound for nonincreasing steps.
pub fn ogd_regret_bound(trace: &[RoundRecord], diameter: f64) -> f64 {
    let Some(last) = trace.last() else {
        return 0.0;
    };
    let variance: f64 = trace
        .iter()
        .map(|r| 0.5 * r.step * dot(&r.gradient, &r.gradient))
        .sum();
    variance + diameter * diameter / (2.0 * last.step)
}

/// `η/2 Σ ‖g_t‖²_{(∇²Ψ(x_t))⁻¹} + radius/η`: the fixed-step OMD bound, with
/// `radius ≥ D_Ψ(x*, x_1)` (`log m` for entropy, `√m` for Tsallis).
pub fn omd_regret_bound(trace: &[RoundRecord], reg: Regularizer, radius: f64) -> f64 {
    let Some(first) = trace.first() else {
        return 0.0;
    };
    let eta = first.step;
    let local: f64 = trace
        .iter()
        .map(|r| {
            let h = reg.inverse_hessian_diag(&r.iterate);
            r.gradient
                .iter()
                .zip(&h)
                .map(|(g, hi)| g * g * hi)
                .sum::<f64>()
        })
        .sum();
    0.5 * eta * local + radius / eta
}
