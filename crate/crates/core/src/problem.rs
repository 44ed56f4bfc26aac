//! Problem definition: linear-model losses, the Euclidean-ball feasible set,
//! the constants that enter the convergence bounds, and the uncertainty set
//! over group weights.

use serde::{Deserialize, Serialize};

use crate::error::{GdroError, Result};

/// Loss of a linear classifier on a labelled point `(a, b)` with `b = ±1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    /// `log(1 + exp(-b aᵀθ))`
    Logistic,
    /// `max(0, 1 - b aᵀθ)`
    Hinge,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::Logistic => "logistic",
            LossKind::Hinge => "hinge",
        }
    }

    /// Loss as a function of the margin `b aᵀθ`.
    #[inline]
    pub fn of_margin(self, margin: f64) -> f64 {
        match self {
            LossKind::Logistic => softplus(-margin),
            LossKind::Hinge => (1.0 - margin).max(0.0),
        }
    }

    /// Derivative of the loss with respect to the margin. At the hinge kink
    /// (margin exactly 1) this is the subgradient `-1`.
    #[inline]
    pub fn margin_slope(self, margin: f64) -> f64 {
        match self {
            LossKind::Logistic => -logistic_sigmoid(-margin),
            LossKind::Hinge => {
                if margin <= 1.0 {
                    -1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Unchecked loss on raw slices.
    #[inline]
    pub fn value(self, theta: &[f64], features: &[f64], label: f64) -> f64 {
        self.of_margin(label * dot(features, theta))
    }

    /// Adds `scale * ∇_θ loss` to `grad` and returns the loss value.
    #[inline]
    pub fn accumulate_grad(
        self,
        theta: &[f64],
        features: &[f64],
        label: f64,
        scale: f64,
        grad: &mut [f64],
    ) -> f64 {
        let margin = label * dot(features, theta);
        let slope = self.margin_slope(margin);
        if slope != 0.0 {
            let c = scale * slope * label;
            for (g, a) in grad.iter_mut().zip(features) {
                *g += c * a;
            }
        }
        self.of_margin(margin)
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `log(1 + e^x)` without overflow.
#[inline]
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[inline]
fn logistic_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// One labelled example. Labels are always `±1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DataPoint {
    pub features: Vec<f64>,
    pub label: f64,
}

impl DataPoint {
    pub fn new(features: Vec<f64>, label: f64) -> Self {
        Self { features, label }
    }
}

/// Model parameters θ.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub theta: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(dim: usize) -> Self {
        Self {
            theta: vec![0.0; dim],
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.theta
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }
}

impl From<Vec<f64>> for ModelParams {
    fn from(theta: Vec<f64>) -> Self {
        Self { theta }
    }
}

fn check_dims(theta: &[f64], point: &DataPoint) -> Result<()> {
    if theta.len() != point.features.len() {
        return Err(GdroError::DimensionMismatch {
            expected: theta.len(),
            got: point.features.len(),
        });
    }
    Ok(())
}

pub fn eval_loss(kind: LossKind, theta: &ModelParams, point: &DataPoint) -> Result<f64> {
    check_dims(&theta.theta, point)?;
    Ok(kind.value(&theta.theta, &point.features, point.label))
}

pub fn eval_loss_grad(kind: LossKind, theta: &ModelParams, point: &DataPoint) -> Result<Vec<f64>> {
    check_dims(&theta.theta, point)?;
    let mut grad = vec![0.0; theta.dim()];
    kind.accumulate_grad(&theta.theta, &point.features, point.label, 1.0, &mut grad);
    Ok(grad)
}

/// Relative slack below which a point counts as inside the ball. Keeps the
/// projection bitwise idempotent despite rounding in the rescaled norm.
const BALL_SLACK: f64 = 1e-12;

/// Scales `theta` back onto the ball `‖θ‖₂ ≤ radius` in place.
pub fn project_ball_in_place(theta: &mut [f64], radius: f64) {
    let norm = norm2(theta);
    if norm > radius * (1.0 + BALL_SLACK) {
        let s = radius / norm;
        for v in theta.iter_mut() {
            *v *= s;
        }
    }
}

/// Euclidean projection onto the centred ball of the given radius.
pub fn project_ball(theta: &[f64], radius: f64) -> Result<ModelParams> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(GdroError::InvalidArgument(format!(
            "ball radius must be positive, got {radius}"
        )));
    }
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(GdroError::NonFinite("theta"));
    }
    let mut out = theta.to_vec();
    project_ball_in_place(&mut out, radius);
    Ok(ModelParams { theta: out })
}

/// Constants `G, D, M, m, n` appearing in the convergence bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemConstants {
    /// Bound on `‖∇_θ ℓ‖₂`.
    pub lipschitz: f64,
    /// Euclidean diameter of the feasible set.
    pub diameter: f64,
    /// Upper bound on the loss.
    pub range: f64,
    pub groups: usize,
    pub dim: usize,
}

impl ProblemConstants {
    pub fn new(lipschitz: f64, diameter: f64, range: f64, groups: usize, dim: usize) -> Result<Self> {
        let ok = lipschitz >= 0.0
            && diameter > 0.0
            && range > 0.0
            && groups > 0
            && dim > 0
            && lipschitz.is_finite()
            && diameter.is_finite()
            && range.is_finite();
        if !ok {
            return Err(GdroError::InvalidArgument(format!(
                "invalid problem constants G={lipschitz} D={diameter} M={range} m={groups} n={dim}"
            )));
        }
        Ok(Self {
            lipschitz,
            diameter,
            range,
            groups,
            dim,
        })
    }

    /// Constants for a linear model on the ball of radius `radius`, given the
    /// largest feature norm in the data. `|aᵀθ| ≤ radius·max‖a‖` on the ball,
    /// which bounds both the loss and, since `|∂ℓ/∂margin| ≤ 1`, the gradient.
    pub fn for_linear_model(
        kind: LossKind,
        radius: f64,
        max_feature_norm: f64,
        groups: usize,
        dim: usize,
    ) -> Result<Self> {
        let reach = radius * max_feature_norm;
        let range = match kind {
            LossKind::Hinge => 1.0 + reach,
            LossKind::Logistic => softplus(reach),
        };
        Self::new(max_feature_norm, 2.0 * radius, range, groups, dim)
    }
}

/// Tolerance used when checking that rank weights sum to one.
const WEIGHT_SUM_TOL: f64 = 1e-9;

/// The convex set `Q` of group weights the adversary maximizes over.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum UncertaintySetSpec {
    /// The probability simplex (group DRO).
    Simplex,
    /// Simplex points with every entry at most `1/(p·m)`.
    KSet { p: f64 },
    /// Convex hull of all permutations of a nonincreasing weight vector.
    Permutahedron { weights: Vec<f64> },
}

impl UncertaintySetSpec {
    pub fn validate(&self, groups: usize) -> Result<()> {
        self.rank_weights(groups).map(|_| ())
    }

    pub fn is_simplex(&self) -> bool {
        matches!(self, UncertaintySetSpec::Simplex)
    }

    /// Nonincreasing weights `α` whose permutahedron equals this set.
    ///
    /// The capped simplex `{q ∈ Δ : q_i ≤ c}` is the permutahedron of
    /// `(c, …, c, 1 − k·c, 0, …, 0)` with `k = ⌊1/c⌋`, so fractional `p·m` is
    /// handled exactly. When `p·m` is an integer `k` the weights are `1/k`.
    pub fn rank_weights(&self, groups: usize) -> Result<Vec<f64>> {
        if groups == 0 {
            return Err(GdroError::InvalidUncertaintySet("zero groups".into()));
        }
        match self {
            UncertaintySetSpec::Simplex => {
                let mut w = vec![0.0; groups];
                w[0] = 1.0;
                Ok(w)
            }
            UncertaintySetSpec::KSet { p } => {
                if !(*p > 0.0 && *p <= 1.0) {
                    return Err(GdroError::InvalidUncertaintySet(format!(
                        "k-set parameter p must lie in (0, 1], got {p}"
                    )));
                }
                let pm = p * groups as f64;
                let nearest = pm.round();
                let (k, cap) = if (pm - nearest).abs() < 1e-9 && nearest >= 1.0 {
                    (nearest as usize, 1.0 / nearest)
                } else {
                    (pm.floor() as usize, 1.0 / pm)
                };
                let mut w = vec![0.0; groups];
                for v in w.iter_mut().take(k.min(groups)) {
                    *v = cap;
                }
                if k < groups {
                    w[k] = (1.0 - k as f64 * cap).max(0.0);
                }
                Ok(w)
            }
            UncertaintySetSpec::Permutahedron { weights } => {
                if weights.len() != groups {
                    return Err(GdroError::InvalidUncertaintySet(format!(
                        "permutahedron has {} weights but there are {groups} groups",
                        weights.len()
                    )));
                }
                if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
                    return Err(GdroError::InvalidUncertaintySet(
                        "permutahedron weights must be finite and nonnegative".into(),
                    ));
                }
                if weights.windows(2).any(|p| p[1] > p[0]) {
                    return Err(GdroError::InvalidUncertaintySet(
                        "permutahedron weights must be nonincreasing".into(),
                    ));
                }
                let sum: f64 = weights.iter().sum();
                if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
                    return Err(GdroError::InvalidUncertaintySet(format!(
                        "permutahedron weights must sum to 1, got {sum}"
                    )));
                }
                Ok(weights.clone())
            }
        }
    }
}
