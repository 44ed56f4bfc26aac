//! Stochastic no-regret dynamics for generalized group DRO.
//!
//! Each iteration samples a group `i_t` from the weight player's distribution
//! (uniformly for the baseline), draws a mini-batch from that group, forms the
//! unbiased estimators `∇_θ ℓ` and `(ℓ/q_{i_t}) e_{i_t}`, takes an OGD step on
//! θ and a mirror step on q. The averaged model `θ̄_t` is what the theory
//! certifies, so checkpoints report the robust objective at `θ̄_t`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::GroupedDataset;
use crate::error::{GdroError, Result};
use crate::evaluation::{group_losses, group_losses_and_grads, robust_objective};
use crate::geometry::{Regularizer, WeightVector};
use crate::learners::{Exp3pParams, SparseLossEstimate, StepSchedule, WeightLearner};
use crate::problem::{project_ball_in_place, DataPoint, LossKind, ProblemConstants, UncertaintySetSpec};
use crate::rng::{stream_rng, uniform_index, StreamRng, SOLVER_STREAM};

/// Access the solvers need: an unbiased sampling oracle per group, a
/// projection onto Θ and, for checkpoints, exact group losses.
pub trait StochasticProblem: Sync {
    fn num_groups(&self) -> usize;
    fn dim(&self) -> usize;
    fn spec(&self) -> &UncertaintySetSpec;
    fn initial_theta(&self) -> Vec<f64> {
        vec![0.0; self.dim()]
    }
    fn project(&self, theta: &mut [f64]);
    /// Draws `batch` i.i.d. points of `group`, overwrites `grad` with the mean
    /// gradient at `theta` and returns the mean loss.
    fn sample_loss_grad(
        &self,
        group: usize,
        theta: &[f64],
        batch: usize,
        rng: &mut StreamRng,
        grad: &mut [f64],
    ) -> Result<f64>;
    /// Exact expected loss of every group.
    fn group_losses(&self, theta: &[f64]) -> Result<Vec<f64>>;
    /// Exact expected losses and their gradients.
    fn group_losses_and_grads(&self, theta: &[f64]) -> Result<(Vec<f64>, Vec<Vec<f64>>)>;
}

/// Linear model with `loss` over the ball of radius `radius`, one empirical
/// distribution per group.
#[derive(Debug, Clone)]
pub struct DroProblem {
    pub dataset: Arc<GroupedDataset>,
    pub loss: LossKind,
    pub radius: f64,
    pub spec: UncertaintySetSpec,
}

impl DroProblem {
    pub fn new(
        dataset: Arc<GroupedDataset>,
        loss: LossKind,
        radius: f64,
        spec: UncertaintySetSpec,
    ) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(GdroError::InvalidArgument(format!("radius must be positive, got {radius}")));
        }
        spec.validate(dataset.num_groups())?;
        Ok(Self {
            dataset,
            loss,
            radius,
            spec,
        })
    }

    pub fn constants(&self) -> Result<ProblemConstants> {
        ProblemConstants::for_linear_model(
            self.loss,
            self.radius,
            self.dataset.max_feature_norm(),
            self.dataset.num_groups(),
            self.dataset.dim(),
        )
    }
}

impl StochasticProblem for DroProblem {
    fn num_groups(&self) -> usize {
        self.dataset.num_groups()
    }

    fn dim(&self) -> usize {
        self.dataset.dim()
    }

    fn spec(&self) -> &UncertaintySetSpec {
        &self.spec
    }

    fn project(&self, theta: &mut [f64]) {
        project_ball_in_place(theta, self.radius);
    }

    fn sample_loss_grad(
        &self,
        group: usize,
        theta: &[f64],
        batch: usize,
        rng: &mut StreamRng,
        grad: &mut [f64],
    ) -> Result<f64> {
        if batch == 0 {
            return Err(GdroError::EmptyBatch);
        }
        let size = self.dataset.group_size(group);
        let scale = 1.0 / batch as f64;
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut total = 0.0;
        for _ in 0..batch {
            let (a, b) = self.dataset.point(group, uniform_index(rng, size));
            total += self.loss.accumulate_grad(theta, a, b, scale, grad);
        }
        Ok(total * scale)
    }

    fn group_losses(&self, theta: &[f64]) -> Result<Vec<f64>> {
        group_losses(self.loss, theta, &self.dataset)
    }

    fn group_losses_and_grads(&self, theta: &[f64]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        group_losses_and_grads(self.loss, theta, &self.dataset)
    }
}

/// The implemented dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Algorithm {
    /// OGD + OMD with the given regularizer over any uncertainty set.
    GenericOmd(Regularizer),
    /// OGD + Hedge with importance-weighted rewards.
    GdroExp3,
    /// OGD + Tsallis-INF.
    GdroTinf,
    /// Uniform group sampling with `m q_i`-scaled gradients and Hedge.
    SagawaBaseline,
    /// OGD + EXP3P (mixing and bias for stability).
    Exp3pVariant,
}

impl Algorithm {
    pub const ALL: [Algorithm; 7] = [
        Algorithm::GdroExp3,
        Algorithm::GdroTinf,
        Algorithm::SagawaBaseline,
        Algorithm::Exp3pVariant,
        Algorithm::GenericOmd(Regularizer::Entropy),
        Algorithm::GenericOmd(Regularizer::Tsallis),
        Algorithm::GenericOmd(Regularizer::Euclidean),
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::GdroExp3 => "gdro-exp3",
            Algorithm::GdroTinf => "gdro-tinf",
            Algorithm::SagawaBaseline => "sagawa",
            Algorithm::Exp3pVariant => "gdro-exp3p",
            Algorithm::GenericOmd(Regularizer::Entropy) => "omd-entropy",
            Algorithm::GenericOmd(Regularizer::Tsallis) => "omd-tsallis",
            Algorithm::GenericOmd(Regularizer::Euclidean) => "omd-euclidean",
        }
    }

    /// Whether the algorithm only supports the simplex.
    pub fn simplex_only(self) -> bool {
        !matches!(self, Algorithm::GenericOmd(_))
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = GdroError;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .iter()
            .copied()
            .find(|a| a.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Algorithm::ALL.iter().map(|a| a.name()).collect();
                GdroError::InvalidArgument(format!("unknown algorithm `{s}` (expected one of {})", names.join(", ")))
            })
    }
}

impl TryFrom<String> for Algorithm {
    type Error = GdroError;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Algorithm> for String {
    fn from(a: Algorithm) -> String {
        a.name().to_string()
    }
}

/// When to evaluate the averaged iterate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CheckpointSchedule {
    /// `t = ⌈ratio^k⌉`, deduplicated, plus `T`.
    Geometric { ratio: f64 },
    /// Every `every` iterations, plus `T`.
    Every { every: u64 },
    /// Only `T`.
    Final,
}

impl Default for CheckpointSchedule {
    fn default() -> Self {
        CheckpointSchedule::Geometric { ratio: 1.2 }
    }
}

impl CheckpointSchedule {
    pub fn times(&self, horizon: u64) -> Result<Vec<u64>> {
        let mut out = Vec::new();
        match *self {
            CheckpointSchedule::Geometric { ratio } => {
                if !(ratio > 1.0 && ratio.is_finite()) {
                    return Err(GdroError::InvalidArgument(format!(
                        "geometric checkpoint ratio must exceed 1, got {ratio}"
                    )));
                }
                let mut x = 1.0f64;
                while x.ceil() <= horizon as f64 {
                    let t = x.ceil() as u64;
                    if out.last() != Some(&t) {
                        out.push(t);
                    }
                    x *= ratio;
                }
            }
            CheckpointSchedule::Every { every } => {
                if every == 0 {
                    return Err(GdroError::InvalidArgument("checkpoint interval must be positive".into()));
                }
                out.extend((1..=horizon / every).map(|k| k * every));
            }
            CheckpointSchedule::Final => {}
        }
        if out.last() != Some(&horizon) {
            out.push(horizon);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub algorithm: Algorithm,
    pub theta_schedule: StepSchedule,
    /// Fixed step `η_q` of the weight player (zero freezes q).
    pub q_step: f64,
    pub iterations: u64,
    pub minibatch: usize,
    pub seed: u64,
    pub checkpoints: CheckpointSchedule,
    /// EXP3P mixing and bias; defaults from the horizon when absent.
    pub exp3p: Option<Exp3pParams>,
    /// Reference value subtracted from objectives to report gaps.
    pub reference_value: Option<f64>,
    /// Keep every `(θ_t, q_t, i_t)` (memory `O(T(n + m))`; for audits).
    pub record_rounds: bool,
}

impl SolverConfig {
    /// The experimental schedule `η_{θ,t} = C_θ·radius/√t`,
    /// `η_q = C_q √(log m / (m T))`.
    pub fn tuned(
        algorithm: Algorithm,
        c_theta: f64,
        c_q: f64,
        radius: f64,
        groups: usize,
        iterations: u64,
        seed: u64,
    ) -> Self {
        let m = groups as f64;
        Self {
            algorithm,
            theta_schedule: StepSchedule::InverseSqrt(c_theta * radius),
            q_step: c_q * (m.ln() / (m * iterations as f64)).sqrt(),
            iterations,
            minibatch: 10,
            seed,
            checkpoints: CheckpointSchedule::default(),
            exp3p: None,
            reference_value: None,
            record_rounds: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.theta_schedule.validate()?;
        if !(self.q_step >= 0.0 && self.q_step.is_finite()) {
            return Err(GdroError::InvalidArgument(format!(
                "q step must be finite and nonnegative, got {}",
                self.q_step
            )));
        }
        if self.iterations == 0 {
            return Err(GdroError::InvalidArgument("iterations must be positive".into()));
        }
        if self.minibatch == 0 {
            return Err(GdroError::EmptyBatch);
        }
        if let Some(p) = self.exp3p {
            p.validate()?;
        }
        self.checkpoints.times(self.iterations)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub iteration: u64,
    pub average_theta: Vec<f64>,
    pub objective: f64,
    pub gap: Option<f64>,
    pub q: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Tsallis updates whose factor was clamped.
    pub clip_events: u64,
    /// `T_i`: iterations that queried group `i`.
    pub queries: Vec<u64>,
}

/// State at the start of one iteration, kept when `record_rounds` is set.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordedRound {
    pub theta: Vec<f64>,
    pub q: Vec<f64>,
    pub group: usize,
    /// Value of the sparse weight-player estimate.
    pub q_estimate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub checkpoints: Vec<Checkpoint>,
    pub diagnostics: Diagnostics,
    pub rounds: Option<Vec<RecordedRound>>,
}

impl Trajectory {
    pub fn last(&self) -> &Checkpoint {
        self.checkpoints.last().expect("trajectories have at least one checkpoint")
    }

    /// `(t, gap)` pairs, when a reference value was configured.
    pub fn gap_series(&self) -> Option<Vec<(u64, f64)>> {
        self.checkpoints.iter().map(|c| c.gap.map(|g| (c.iteration, g))).collect()
    }

    /// Lowest robust objective over all checkpoints, with its `θ̄`.
    pub fn best_checkpoint(&self) -> &Checkpoint {
        self.checkpoints
            .iter()
            .min_by(|a, b| a.objective.total_cmp(&b.objective))
            .expect("nonempty")
    }
}

/// Draws `i ∼ q` by inverse transform of one uniform.
pub fn sample_group<R: Rng + ?Sized>(q: &WeightVector, rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut cum = 0.0;
    let mut last_positive = 0;
    for (i, &p) in q.as_slice().iter().enumerate() {
        if p > 0.0 {
            last_positive = i;
            cum += p;
            if u < cum {
                return i;
            }
        }
    }
    last_positive
}

fn batch_mean(loss: LossKind, theta: &[f64], batch: &[DataPoint]) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(GdroError::EmptyBatch);
    }
    let scale = 1.0 / batch.len() as f64;
    let mut grad = vec![0.0; theta.len()];
    let mut total = 0.0;
    for p in batch {
        if p.features.len() != theta.len() {
            return Err(GdroError::DimensionMismatch {
                expected: theta.len(),
                got: p.features.len(),
            });
        }
        total += loss.accumulate_grad(theta, &p.features, p.label, scale, &mut grad);
    }
    Ok((total * scale, grad))
}

/// Estimators for `i_t ∼ q`: the batch-mean gradient and `(ℓ̄/q_{i_t}) e_{i_t}`.
pub fn make_estimates(
    loss: LossKind,
    theta: &[f64],
    q: &WeightVector,
    group: usize,
    batch: &[DataPoint],
) -> Result<(Vec<f64>, SparseLossEstimate)> {
    check_group(q, group)?;
    let (l, grad) = batch_mean(loss, theta, batch)?;
    Ok((grad, SparseLossEstimate::new(group, l / q.get(group))))
}

/// Estimators for uniform `i_t`: `m q_{i_t} ∇ℓ̄` and `m ℓ̄ e_{i_t}`.
pub fn make_estimates_sagawa(
    loss: LossKind,
    theta: &[f64],
    q: &WeightVector,
    group: usize,
    batch: &[DataPoint],
) -> Result<(Vec<f64>, SparseLossEstimate)> {
    check_group(q, group)?;
    let m = q.len() as f64;
    let (l, mut grad) = batch_mean(loss, theta, batch)?;
    let s = m * q.get(group);
    grad.iter_mut().for_each(|g| *g *= s);
    Ok((grad, SparseLossEstimate::new(group, m * l)))
}

fn check_group(q: &WeightVector, group: usize) -> Result<()> {
    if group >= q.len() {
        return Err(GdroError::GroupOutOfRange {
            index: group,
            groups: q.len(),
        });
    }
    Ok(())
}

/// Compensated running sum of vectors.
struct KahanSum {
    sum: Vec<f64>,
    carry: Vec<f64>,
}

impl KahanSum {
    fn new(n: usize) -> Self {
        Self {
            sum: vec![0.0; n],
            carry: vec![0.0; n],
        }
    }

    fn add(&mut self, x: &[f64]) {
        for ((s, c), &v) in self.sum.iter_mut().zip(self.carry.iter_mut()).zip(x) {
            let y = v - *c;
            let t = *s + y;
            *c = (t - *s) - y;
            *s = t;
        }
    }

    fn mean(&self, count: u64) -> Vec<f64> {
        self.sum.iter().map(|s| s / count as f64).collect()
    }
}

fn make_learner(m: usize, spec: &UncertaintySetSpec, config: &SolverConfig) -> Result<WeightLearner> {
    if config.algorithm.simplex_only() && !spec.is_simplex() {
        return Err(GdroError::Unsupported(format!(
            "{} supports only the simplex; use a generic mirror-descent algorithm for other sets",
            config.algorithm
        )));
    }
    Ok(match config.algorithm {
        Algorithm::GdroExp3 | Algorithm::SagawaBaseline => WeightLearner::hedge(m),
        Algorithm::GdroTinf => WeightLearner::tinf(m),
        Algorithm::Exp3pVariant => WeightLearner::exp3p(
            m,
            config
                .exp3p
                .unwrap_or_else(|| Exp3pParams::default_for(m, config.iterations)),
        ),
        Algorithm::GenericOmd(reg) => WeightLearner::omd(reg, spec.rank_weights(m)?),
    })
}

/// Runs `config.iterations` iterations from `θ₁ = problem.initial_theta()`
/// and `q₁` uniform. Deterministic given the seed.
pub fn run_solver<P: StochasticProblem + ?Sized>(problem: &P, config: &SolverConfig) -> Result<Trajectory> {
    config.validate()?;
    let m = problem.num_groups();
    let n = problem.dim();
    let mut learner = make_learner(m, problem.spec(), config)?;
    let times = config.checkpoints.times(config.iterations)?;
    let mut next_checkpoint = times.iter().copied().peekable();

    let mut rng = stream_rng(config.seed, SOLVER_STREAM);
    let mut theta = problem.initial_theta();
    let mut grad = vec![0.0; n];
    let mut average = KahanSum::new(n);
    let mut diagnostics = Diagnostics {
        clip_events: 0,
        queries: vec![0; m],
    };
    let mut rounds = config.record_rounds.then(Vec::new);
    let mut checkpoints = Vec::with_capacity(times.len());
    let sagawa = config.algorithm == Algorithm::SagawaBaseline;

    for t in 1..=config.iterations {
        let group = if sagawa {
            uniform_index(&mut rng, m)
        } else {
            sample_group(learner.played(), &mut rng)
        };
        diagnostics.queries[group] += 1;
        let loss = problem.sample_loss_grad(group, &theta, config.minibatch, &mut rng, &mut grad)?;
        let q_i = learner.played().get(group);
        let est_value = if sagawa {
            let s = m as f64 * q_i;
            grad.iter_mut().for_each(|g| *g *= s);
            m as f64 * loss
        } else {
            loss / q_i
        };
        if !est_value.is_finite() {
            return Err(GdroError::NonFinite("weight-player estimate"));
        }
        if let Some(r) = rounds.as_mut() {
            r.push(RecordedRound {
                theta: theta.clone(),
                q: learner.played().as_slice().to_vec(),
                group,
                q_estimate: est_value,
            });
        }
        average.add(&theta);

        let eta = config.theta_schedule.at(t);
        for (th, g) in theta.iter_mut().zip(&grad) {
            *th -= eta * g;
        }
        problem.project(&mut theta);
        if config.q_step > 0.0 && learner.update(SparseLossEstimate::new(group, est_value), config.q_step)? {
            diagnostics.clip_events += 1;
        }

        if next_checkpoint.peek() == Some(&t) {
            next_checkpoint.next();
            let avg = average.mean(t);
            let objective = robust_objective(&problem.group_losses(&avg)?, problem.spec())?;
            checkpoints.push(Checkpoint {
                iteration: t,
                average_theta: avg,
                objective,
                gap: config.reference_value.map(|r| objective - r),
                q: learner.played().as_slice().to_vec(),
            });
        }
    }
    Ok(Trajectory {
        algorithm: config.algorithm,
        seed: config.seed,
        checkpoints,
        diagnostics,
        rounds,
    })
}

/// Closed-form rate for the step sizes optimized in the respective analysis:
///
/// * entropy (EXP3, EXP3P, entropic OMD): `√2 √(G²D² + 2M² m log m) / √T`,
/// * Tsallis (INF, Tsallis OMD): `√2 √(G²D² + 4M² m) / √T`,
/// * uniform-sampling baseline: `√2 m √((G²D² + 2M² log m) / T)`.
pub fn theoretical_rate(algorithm: Algorithm, c: &ProblemConstants, horizon: u64) -> Result<f64> {
    if horizon == 0 {
        return Err(GdroError::InvalidArgument("horizon must be positive".into()));
    }
    let t = horizon as f64;
    let m = c.groups as f64;
    let gd2 = (c.lipschitz * c.diameter).powi(2);
    let m2 = c.range * c.range;
    let sqrt2 = std::f64::consts::SQRT_2;
    Ok(match algorithm {
        Algorithm::GdroExp3 | Algorithm::Exp3pVariant | Algorithm::GenericOmd(Regularizer::Entropy) => {
            sqrt2 * (gd2 + 2.0 * m2 * m * m.ln()).sqrt() / t.sqrt()
        }
        Algorithm::GdroTinf | Algorithm::GenericOmd(Regularizer::Tsallis) => {
            sqrt2 * (gd2 + 4.0 * m2 * m).sqrt() / t.sqrt()
        }
        Algorithm::SagawaBaseline => sqrt2 * m * ((gd2 + 2.0 * m2 * m.ln()) / t).sqrt(),
        Algorithm::GenericOmd(Regularizer::Euclidean) => {
            return Err(GdroError::Unsupported(
                "no closed-form rate for the Euclidean regularizer".into(),
            ))
        }
    })
}

/// Expected-gap bound for arbitrary nonincreasing θ steps and a fixed `η_q`:
/// `(1/T)(G'²/2 Σ η_t + D²/(2η_T) + V η_q T + R/η_q)` with
/// `(G'², V, R)` = `(G², mM²/2, log m)` for entropy, `(G², √m M², √m)` for
/// Tsallis and `(m²G², m²M²/2, log m)` for the baseline.
pub fn generic_bound(
    algorithm: Algorithm,
    c: &ProblemConstants,
    theta_schedule: StepSchedule,
    q_step: f64,
    horizon: u64,
) -> Result<f64> {
    if horizon == 0 || !(q_step > 0.0) {
        return Err(GdroError::InvalidArgument("horizon and q step must be positive".into()));
    }
    theta_schedule.validate()?;
    let t = horizon as f64;
    let m = c.groups as f64;
    let g2 = c.lipschitz * c.lipschitz;
    let m2 = c.range * c.range;
    let (gg, v, r) = match algorithm {
        Algorithm::GdroExp3 | Algorithm::Exp3pVariant | Algorithm::GenericOmd(Regularizer::Entropy) => {
            (g2, m * m2 / 2.0, m.ln())
        }
        Algorithm::GdroTinf | Algorithm::GenericOmd(Regularizer::Tsallis) => (g2, m.sqrt() * m2, m.sqrt()),
        Algorithm::SagawaBaseline => (m * m * g2, m * m * m2 / 2.0, m.ln()),
        Algorithm::GenericOmd(Regularizer::Euclidean) => {
            return Err(GdroError::Unsupported(
                "no bound for the Euclidean regularizer".into(),
            ))
        }
    };
    let step_sum: f64 = (1..=horizon).map(|k| theta_schedule.at(k)).sum();
    let last = theta_schedule.at(horizon);
    let d2 = c.diameter * c.diameter;
    Ok((gg / 2.0 * step_sum + d2 / (2.0 * last) + v * q_step * t + r / q_step) / t)
}

/// Result of the deterministic full-gradient dynamics.
#[derive(Debug, Clone, PartialEq)]
pub struct FullGradientResult {
    /// Best point seen (iterates and running averages).
    pub theta: Vec<f64>,
    pub value: f64,
}

/// Exact-gradient no-regret dynamics: OGD on θ with `Σ q_i ∇L_i(θ)` and
/// entropic mirror ascent on q with the full loss vector. Every iterate and
/// every checkpointed average is evaluated exactly, and the best is returned.
pub fn full_gradient_dynamics<P: StochasticProblem + ?Sized>(
    problem: &P,
    iterations: u64,
    theta_schedule: StepSchedule,
    q_step: f64,
) -> Result<FullGradientResult> {
    theta_schedule.validate()?;
    let m = problem.num_groups();
    let n = problem.dim();
    let mut learner = WeightLearner::omd(Regularizer::Entropy, problem.spec().rank_weights(m)?);
    let mut theta = problem.initial_theta();
    let mut average = KahanSum::new(n);
    let mut best = FullGradientResult {
        theta: theta.clone(),
        value: f64::INFINITY,
    };
    let times = CheckpointSchedule::Every { every: 10 }.times(iterations)?;
    let mut next = times.iter().copied().peekable();
    let consider = |point: &[f64], value: f64, best: &mut FullGradientResult| {
        if value < best.value {
            best.value = value;
            best.theta = point.to_vec();
        }
    };
    for t in 1..=iterations {
        let (losses, grads) = problem.group_losses_and_grads(&theta)?;
        consider(&theta, robust_objective(&losses, problem.spec())?, &mut best);
        average.add(&theta);
        let q = learner.played().as_slice().to_vec();
        let eta = theta_schedule.at(t);
        for (qi, g) in q.iter().zip(&grads) {
            for (th, gj) in theta.iter_mut().zip(g) {
                *th -= eta * qi * gj;
            }
        }
        problem.project(&mut theta);
        if q_step > 0.0 {
            learner.update_full(&losses, q_step)?;
        }
        if next.peek() == Some(&t) {
            next.next();
            let avg = average.mean(t);
            let v = robust_objective(&problem.group_losses(&avg)?, problem.spec())?;
            consider(&avg, v, &mut best);
        }
    }
    let (losses, _) = problem.group_losses_and_grads(&theta)?;
    consider(&theta, robust_objective(&losses, problem.spec())?, &mut best);
    Ok(best)
}
