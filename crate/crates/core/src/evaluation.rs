//! Exact objective evaluation on full datasets, optimality gaps against a
//! reference value, and log-log slope fitting.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::GroupedDataset;
use crate::error::{GdroError, Result};
use crate::problem::{LossKind, UncertaintySetSpec};

/// Per-group empirical mean losses `L_i(θ)`. Groups are evaluated in
/// parallel; each group is summed sequentially, so the result does not depend
/// on the thread count.
pub fn group_losses(loss: LossKind, theta: &[f64], dataset: &GroupedDataset) -> Result<Vec<f64>> {
    if theta.len() != dataset.dim() {
        return Err(GdroError::DimensionMismatch {
            expected: dataset.dim(),
            got: theta.len(),
        });
    }
    Ok((0..dataset.num_groups())
        .into_par_iter()
        .map(|g| {
            let total: f64 = dataset.points(g).map(|(a, b)| loss.value(theta, a, b)).sum();
            total / dataset.group_size(g) as f64
        })
        .collect())
}

/// Per-group mean losses and their gradients.
pub fn group_losses_and_grads(
    loss: LossKind,
    theta: &[f64],
    dataset: &GroupedDataset,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    if theta.len() != dataset.dim() {
        return Err(GdroError::DimensionMismatch {
            expected: dataset.dim(),
            got: theta.len(),
        });
    }
    let per: Vec<(f64, Vec<f64>)> = (0..dataset.num_groups())
        .into_par_iter()
        .map(|g| {
            let scale = 1.0 / dataset.group_size(g) as f64;
            let mut grad = vec![0.0; theta.len()];
            let total: f64 = dataset
                .points(g)
                .map(|(a, b)| loss.accumulate_grad(theta, a, b, scale, &mut grad))
                .sum();
            (total * scale, grad)
        })
        .collect();
    Ok(per.into_iter().unzip())
}

/// `max_{q∈Q} qᵀL`, evaluated as `Σ α_k L_(k)` with `L` sorted nonincreasing
/// and `α` the rank weights of `Q`. For a fractional k-set cap this is the
/// greedy fill: cap weight on the largest losses, the remainder on the next.
pub fn robust_objective(losses: &[f64], spec: &UncertaintySetSpec) -> Result<f64> {
    if losses.iter().any(|v| !v.is_finite()) {
        return Err(GdroError::NonFinite("group losses"));
    }
    let alpha = spec.rank_weights(losses.len())?;
    let mut sorted = losses.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    Ok(sorted.iter().zip(&alpha).map(|(l, a)| l * a).sum())
}

/// Where a reference value came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// Identifies the (dataset, loss, radius, set) the value certifies.
    pub problem_key: String,
    pub methods: Vec<String>,
    pub horizon: u64,
    pub seeds: Vec<u64>,
}

/// Best robust objective found for a problem: an upper bound on the minimax
/// value used as the zero of optimality gaps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSolution {
    pub theta: Vec<f64>,
    pub value: f64,
    pub provenance: Provenance,
}

/// `robust_objective(θ) − value_ref`. Not clamped: a slightly negative value
/// means the reference is loose.
pub fn optimality_gap(
    loss: LossKind,
    theta: &[f64],
    dataset: &GroupedDataset,
    spec: &UncertaintySetSpec,
    reference: &ReferenceSolution,
    problem_key: &str,
) -> Result<f64> {
    if reference.provenance.problem_key != problem_key {
        return Err(GdroError::InvalidArgument(format!(
            "reference certifies problem `{}`, not `{problem_key}`",
            reference.provenance.problem_key
        )));
    }
    let l = group_losses(loss, theta, dataset)?;
    Ok(robust_objective(&l, spec)? - reference.value)
}

/// Floor applied to gaps before taking logarithms in reports.
pub const GAP_FLOOR: f64 = 1e-12;

/// Least-squares slope of `log gap` against `log t`.
///
/// The first `burn_in_fraction` of the points (by count) is dropped; at least
/// ten points must remain. Nonpositive gaps are then excluded, and at least
/// five must survive.
pub fn fit_convergence_slope(points: &[(u64, f64)], burn_in_fraction: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&burn_in_fraction) {
        return Err(GdroError::InvalidArgument(format!(
            "burn-in fraction must lie in [0, 1), got {burn_in_fraction}"
        )));
    }
    let skip = (burn_in_fraction * points.len() as f64).floor() as usize;
    let tail = &points[skip..];
    if tail.len() < 10 {
        return Err(GdroError::InvalidArgument(format!(
            "need at least 10 checkpoints after burn-in, got {}",
            tail.len()
        )));
    }
    let xy: Vec<(f64, f64)> = tail
        .iter()
        .filter(|(t, g)| *t > 0 && *g > 0.0 && g.is_finite())
        .map(|&(t, g)| ((t as f64).ln(), g.ln()))
        .collect();
    if xy.len() < 5 {
        return Err(GdroError::InvalidArgument(format!(
            "only {} positive gaps after burn-in",
            xy.len()
        )));
    }
    let n = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / n;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = xy.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xy.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(GdroError::InvalidArgument("all checkpoints share one iteration".into()));
    }
    Ok(sxy / sxx)
}
