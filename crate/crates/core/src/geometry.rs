//! Geometry of the weight player: regularizers, Bregman divergences and
//! Bregman projections onto the simplex and onto permutahedra.
//!
//! Projections onto a permutahedron `P(α)` run in `O(m log m)`: sort the dual
//! point, pool adjacent violators on the per-block multipliers (each block is
//! a scalar solve), then unsort.

use serde::{Deserialize, Serialize};

use crate::error::{GdroError, Result};
use crate::problem::UncertaintySetSpec;

/// Lower bound enforced on every weight after a projection. Importance
/// weights `ℓ/q_i` stay finite as long as no weight reaches zero.
pub const WEIGHT_FLOOR: f64 = 1e-12;

/// Default residual tolerance for the Tsallis normalization equation.
pub const TSALLIS_TOL: f64 = 1e-12;

const MAX_ROOT_ITERS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regularizer {
    /// `Σ x log x − x`
    Entropy,
    /// `2(1 − Σ √x)`
    Tsallis,
    /// `½‖x‖²`
    Euclidean,
}

impl Regularizer {
    fn needs_positive(self) -> bool {
        !matches!(self, Regularizer::Euclidean)
    }

    pub fn value(self, x: &[f64]) -> f64 {
        match self {
            Regularizer::Entropy => x.iter().map(|&v| xlogx(v) - v).sum(),
            Regularizer::Tsallis => 2.0 * (1.0 - x.iter().map(|v| v.sqrt()).sum::<f64>()),
            Regularizer::Euclidean => 0.5 * x.iter().map(|v| v * v).sum::<f64>(),
        }
    }

    /// Coordinate of the mirror map `∇Ψ`.
    #[inline]
    pub fn link(self, x: f64) -> f64 {
        match self {
            Regularizer::Entropy => x.ln(),
            Regularizer::Tsallis => -1.0 / x.sqrt(),
            Regularizer::Euclidean => x,
        }
    }

    /// Inverse of [`Regularizer::link`]. For Tsallis the argument must be negative.
    #[inline]
    pub fn inverse_link(self, u: f64) -> f64 {
        match self {
            Regularizer::Entropy => u.exp(),
            Regularizer::Tsallis => 1.0 / (u * u),
            Regularizer::Euclidean => u,
        }
    }

    pub fn gradient(self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|&v| self.link(v)).collect()
    }

    /// Diagonal of `∇²Ψ(x)`.
    pub fn hessian_diag(self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .map(|&v| match self {
                Regularizer::Entropy => 1.0 / v,
                Regularizer::Tsallis => 0.5 * v.powf(-1.5),
                Regularizer::Euclidean => 1.0,
            })
            .collect()
    }

    /// Diagonal of `(∇²Ψ(x))⁻¹`.
    pub fn inverse_hessian_diag(self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .map(|&v| match self {
                Regularizer::Entropy => v,
                Regularizer::Tsallis => 2.0 * v.powf(1.5),
                Regularizer::Euclidean => 1.0,
            })
            .collect()
    }
}

fn xlogx(v: f64) -> f64 {
    if v == 0.0 {
        0.0
    } else {
        v * v.ln()
    }
}

/// `D_Ψ(x, y) = Ψ(x) − Ψ(y) − ∇Ψ(y)ᵀ(x − y)`.
///
/// Evaluated in closed forms that are sums of nonnegative terms, so the
/// result is never negative from cancellation.
pub fn bregman_divergence(reg: Regularizer, x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(GdroError::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    if reg.needs_positive() && x.iter().chain(y).any(|&v| !(v > 0.0)) {
        return Err(GdroError::InvalidArgument(
            "Bregman divergence of this regularizer needs strictly positive arguments".into(),
        ));
    }
    let d = match reg {
        Regularizer::Entropy => x
            .iter()
            .zip(y)
            .map(|(&a, &b)| a * (a / b).ln() - a + b)
            .sum(),
        Regularizer::Tsallis => x
            .iter()
            .zip(y)
            .map(|(&a, &b)| {
                let diff = a.sqrt() - b.sqrt();
                diff * diff / b.sqrt()
            })
            .sum(),
        Regularizer::Euclidean => 0.5 * x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(),
    };
    Ok(f64::max(d, 0.0))
}

/// `E_{i∼q}[(∇²Ψ(q))⁻¹_ii / q_i²]`, the expected squared local norm of the
/// importance-weighted estimator with unit loss.
pub fn expected_local_norm(reg: Regularizer, q: &[f64]) -> f64 {
    reg.inverse_hessian_diag(q)
        .iter()
        .zip(q)
        .map(|(h, &qi)| qi * h / (qi * qi))
        .sum()
}

/// A point of the weight set: strictly positive entries summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn uniform(m: usize) -> Self {
        Self(vec![1.0 / m as f64; m])
    }

    /// Validates positivity and normalization (to `1e-9`).
    pub fn new(q: Vec<f64>) -> Result<Self> {
        if q.is_empty() {
            return Err(GdroError::InvalidArgument("empty weight vector".into()));
        }
        if q.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(GdroError::InvalidArgument(
                "weights must be finite and strictly positive".into(),
            ));
        }
        let sum: f64 = q.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(GdroError::InvalidArgument(format!(
                "weights must sum to one, got {sum}"
            )));
        }
        Ok(Self(q))
    }

    /// Floors entries at [`WEIGHT_FLOOR`] and rescales to sum to one.
    pub(crate) fn from_unnormalized(mut q: Vec<f64>) -> Self {
        for v in q.iter_mut() {
            if !(*v >= WEIGHT_FLOOR) {
                *v = WEIGHT_FLOOR;
            }
        }
        let sum: f64 = q.iter().sum();
        for v in q.iter_mut() {
            // Re-floor: dividing by a sum above 1 can push a floored entry just under.
            *v = (*v / sum).max(WEIGHT_FLOOR);
        }
        Self(q)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.0[i]
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for WeightVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

fn check_positive(q: &[f64]) -> Result<()> {
    if q.is_empty() {
        return Err(GdroError::InvalidArgument("empty vector".into()));
    }
    if q.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(GdroError::InvalidArgument(
            "projection input must be finite and strictly positive".into(),
        ));
    }
    Ok(())
}

/// Entropic Bregman projection onto the simplex: plain normalization.
pub fn entropy_simplex_project(q_tilde: &[f64]) -> Result<WeightVector> {
    check_positive(q_tilde)?;
    let sum: f64 = q_tilde.iter().sum();
    if !sum.is_finite() {
        return Err(GdroError::NonFinite("projection input sum"));
    }
    Ok(WeightVector::from_unnormalized(
        q_tilde.iter().map(|v| v / sum).collect(),
    ))
}

/// Entropic projection of a point given by its logarithms, `q̃ = exp(log_w)`.
/// Max-subtraction keeps this finite for any finite input.
pub fn entropy_simplex_project_log(log_w: &[f64]) -> Result<WeightVector> {
    if log_w.is_empty() {
        return Err(GdroError::InvalidArgument("empty vector".into()));
    }
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(GdroError::NonFinite("log-weights"));
    }
    let w: Vec<f64> = log_w.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = w.iter().sum();
    Ok(WeightVector::from_unnormalized(
        w.into_iter().map(|v| v / sum).collect(),
    ))
}

/// Solves `Σ_i (c_i − μ)^{-2} = target` for `μ < min c`.
///
/// The left side is increasing and convex in `μ` on that interval, so the
/// root is unique and lies in `[min c − √(m/target), min c − √(1/target)]`.
/// Newton's method is started from `warm` (if it falls inside the bracket)
/// and falls back to bisection whenever a step leaves the bracket.
///
/// Returns `(μ, |residual|)`.
pub(crate) fn solve_inverse_square_sum(
    c: &[f64],
    target: f64,
    tol: f64,
    warm: Option<f64>,
) -> Result<(f64, f64)> {
    debug_assert!(target > 0.0 && !c.is_empty());
    let cmin = c.iter().copied().fold(f64::INFINITY, f64::min);
    let m = c.len() as f64;
    let mut lo = cmin - (m / target).sqrt();
    let mut hi = cmin - (1.0 / target).sqrt();
    let eval = |mu: f64| -> (f64, f64) {
        let mut f = -target;
        let mut fp = 0.0;
        for &ci in c {
            let inv = 1.0 / (ci - mu);
            let inv2 = inv * inv;
            f += inv2;
            fp += 2.0 * inv2 * inv;
        }
        (f, fp)
    };
    let mut x = match warm {
        Some(w) if w > lo && w < hi => w,
        _ => hi,
    };
    let mut residual = f64::INFINITY;
    for _ in 0..MAX_ROOT_ITERS {
        let (f, fp) = eval(x);
        residual = f.abs();
        if residual <= tol {
            return Ok((x, residual));
        }
        if f < 0.0 {
            lo = lo.max(x);
        } else {
            hi = hi.min(x);
        }
        let newton = x - f / fp;
        let next = if newton > lo && newton < hi && newton.is_finite() {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if next == x {
            break;
        }
        x = next;
    }
    Err(GdroError::NoConvergence {
        iterations: MAX_ROOT_ITERS,
        residual,
    })
}

/// Tsallis-entropy Bregman projection onto the simplex.
///
/// The projection of `q̃` is `q_i = (q̃_i^{-1/2} − α)^{-2}` with `α` the unique
/// root of `Σ_i (q̃_i^{-1/2} − α)^{-2} = 1` below `min_i q̃_i^{-1/2}`. Returns
/// the projected point together with `α`.
pub fn tsallis_simplex_project(q_tilde: &[f64], tol: f64) -> Result<(WeightVector, f64)> {
    tsallis_simplex_project_warm(q_tilde, tol, None)
}

/// [`tsallis_simplex_project`] with a warm start for `α`.
pub fn tsallis_simplex_project_warm(
    q_tilde: &[f64],
    tol: f64,
    warm: Option<f64>,
) -> Result<(WeightVector, f64)> {
    check_positive(q_tilde)?;
    let c: Vec<f64> = q_tilde.iter().map(|v| 1.0 / v.sqrt()).collect();
    tsallis_project_dual(&c, tol, warm)
}

/// Tsallis projection from the negated dual point `c = −∇Ψ(q̃) = q̃^{-1/2}`.
pub(crate) fn tsallis_project_dual(
    c: &[f64],
    tol: f64,
    warm: Option<f64>,
) -> Result<(WeightVector, f64)> {
    if !(tol > 0.0) {
        return Err(GdroError::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    if c.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(GdroError::NonFinite("Tsallis dual point"));
    }
    let (alpha, _) = solve_inverse_square_sum(c, 1.0, tol, warm)?;
    let q: Vec<f64> = c
        .iter()
        .map(|ci| {
            let s = ci - alpha;
            1.0 / (s * s)
        })
        .collect();
    Ok((WeightVector::from_unnormalized(q), alpha))
}

/// Residual `|Σ_i (q̃_i^{-1/2} − α)^{-2} − 1|` of a Tsallis normalizer.
pub fn tsallis_residual(q_tilde: &[f64], alpha: f64) -> f64 {
    let s: f64 = q_tilde
        .iter()
        .map(|v| {
            let d = 1.0 / v.sqrt() - alpha;
            1.0 / (d * d)
        })
        .sum();
    (s - 1.0).abs()
}

/// Bregman projection of `q̃` onto the permutahedron described by `spec`.
pub fn permutahedron_bregman_project(
    q_tilde: &[f64],
    spec: &UncertaintySetSpec,
    reg: Regularizer,
    tol: f64,
) -> Result<WeightVector> {
    check_positive(q_tilde)?;
    let weights = spec.rank_weights(q_tilde.len())?;
    let dual: Vec<f64> = q_tilde.iter().map(|&v| reg.link(v)).collect();
    project_dual_onto_permutahedron(&dual, &weights, reg, tol)
}

struct Block {
    start: usize,
    end: usize,
    mass: f64,
    multiplier: f64,
}

/// Bregman projection onto `P(α)` of the point whose mirror image is `dual`
/// (`dual = ∇Ψ(q̃)`), with `weights = α` sorted nonincreasing.
///
/// Optimality: `∇Ψ(q)_i = dual_i − λ_i`, where in the order of decreasing
/// `dual` the multipliers `λ` are nonincreasing and constant on blocks whose
/// mass equals the matching sum of `α`. Singleton blocks start at
/// `λ_i = dual_i − ∇Ψ(α_i)` and adjacent blocks pool while `λ` increases.
pub fn project_dual_onto_permutahedron(
    dual: &[f64],
    weights: &[f64],
    reg: Regularizer,
    tol: f64,
) -> Result<WeightVector> {
    let m = dual.len();
    if weights.len() != m {
        return Err(GdroError::DimensionMismatch {
            expected: m,
            got: weights.len(),
        });
    }
    if dual.iter().any(|v| !v.is_finite()) {
        return Err(GdroError::NonFinite("dual point"));
    }
    if reg == Regularizer::Tsallis && dual.iter().any(|&v| v >= 0.0) {
        return Err(GdroError::InvalidArgument(
            "Tsallis dual coordinates must be negative".into(),
        ));
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| dual[b].total_cmp(&dual[a]).then(a.cmp(&b)));
    let sorted: Vec<f64> = order.iter().map(|&i| dual[i]).collect();

    let mut stack: Vec<Block> = Vec::with_capacity(m);
    for (k, &mass) in weights.iter().enumerate() {
        let mut block = Block {
            start: k,
            end: k + 1,
            mass,
            multiplier: block_multiplier(reg, &sorted[k..k + 1], mass, tol, None)?,
        };
        while let Some(prev) = stack.last() {
            if prev.multiplier >= block.multiplier {
                break;
            }
            let prev = stack.pop().expect("nonempty stack");
            let mass = prev.mass + block.mass;
            let warm = prev.multiplier.is_finite().then_some(prev.multiplier);
            block = Block {
                start: prev.start,
                end: block.end,
                mass,
                multiplier: block_multiplier(reg, &sorted[prev.start..block.end], mass, tol, warm)?,
            };
        }
        stack.push(block);
    }

    let mut q = vec![0.0; m];
    for block in &stack {
        for k in block.start..block.end {
            q[order[k]] = reg.inverse_link(sorted[k] - block.multiplier);
        }
    }
    if reg == Regularizer::Euclidean {
        return Ok(WeightVector(q));
    }
    Ok(WeightVector::from_unnormalized(q))
}

/// The `λ` for which `Σ_{i∈B} (∇Ψ)⁻¹(dual_i − λ) = mass`; `+∞` for zero mass.
fn block_multiplier(
    reg: Regularizer,
    dual: &[f64],
    mass: f64,
    tol: f64,
    warm: Option<f64>,
) -> Result<f64> {
    if mass <= 0.0 && reg != Regularizer::Euclidean {
        // the link diverges at zero; such a block always pools with its predecessor
        return Ok(f64::INFINITY);
    }
    Ok(match reg {
        Regularizer::Entropy => {
            let max = dual.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + dual.iter().map(|d| (d - max).exp()).sum::<f64>().ln();
            lse - mass.ln()
        }
        Regularizer::Euclidean => (dual.iter().sum::<f64>() - mass) / dual.len() as f64,
        Regularizer::Tsallis => {
            // (λ − dual_i)^{-2} summed; with c = −dual and μ = −λ this is the
            // inverse-square equation in μ.
            let c: Vec<f64> = dual.iter().map(|d| -d).collect();
            let (mu, _) = solve_inverse_square_sum(&c, mass, tol, warm.map(|w| -w))?;
            -mu
        }
    })
}
