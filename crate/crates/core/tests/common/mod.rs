//! Independent projection oracle shared by integration tests.
//!
//! The Bregman projection onto a permutahedron lies in the relative interior
//! of some face, and faces correspond to ordered partitions of the
//! coordinates into blocks with prescribed masses. On a face the problem
//! separates per block into a one-dimensional root find. Enumerating every
//! ordered partition, keeping the feasible candidates and taking the one with
//! the smallest divergence therefore recovers the projection exactly, without
//! sharing any code with the library's pool-adjacent-violators solver.

#![allow(dead_code)]

use gdro::geometry::Regularizer;

fn link(reg: Regularizer, x: f64) -> f64 {
    match reg {
        Regularizer::Entropy => x.ln(),
        Regularizer::Tsallis => -1.0 / x.sqrt(),
        Regularizer::Euclidean => x,
    }
}

fn inverse_link(reg: Regularizer, u: f64) -> f64 {
    match reg {
        Regularizer::Entropy => u.exp(),
        Regularizer::Tsallis => 1.0 / (u * u),
        Regularizer::Euclidean => u,
    }
}

fn psi(reg: Regularizer, q: &[f64]) -> f64 {
    match reg {
        Regularizer::Entropy => q.iter().map(|&x| if x > 0.0 { x * x.ln() - x } else { 0.0 }).sum(),
        Regularizer::Tsallis => -2.0 * q.iter().map(|x| x.sqrt()).sum::<f64>(),
        Regularizer::Euclidean => 0.5 * q.iter().map(|x| x * x).sum::<f64>(),
    }
}

/// `D_Ψ(q, q̃)` up to a constant independent of `q`.
fn objective(reg: Regularizer, q: &[f64], q_tilde: &[f64]) -> f64 {
    psi(reg, q) - q.iter().zip(q_tilde).map(|(a, b)| a * link(reg, *b)).sum::<f64>()
}

/// Minimizes the divergence over `{q : Σ_B q = mass}` for one block.
fn solve_block(reg: Regularizer, q_tilde: &[f64], block: &[usize], mass: f64) -> Vec<f64> {
    if mass <= 0.0 {
        return vec![0.0; block.len()];
    }
    match reg {
        Regularizer::Entropy => {
            let s: f64 = block.iter().map(|&i| q_tilde[i]).sum();
            block.iter().map(|&i| mass * q_tilde[i] / s).collect()
        }
        Regularizer::Euclidean => {
            let s: f64 = block.iter().map(|&i| q_tilde[i]).sum();
            let shift = (s - mass) / block.len() as f64;
            block.iter().map(|&i| q_tilde[i] - shift).collect()
        }
        Regularizer::Tsallis => {
            // q_i = (u_i − λ)^{-2} with u_i = −q̃_i^{-1/2}; total mass falls in λ.
            let u: Vec<f64> = block.iter().map(|&i| link(reg, q_tilde[i])).collect();
            let total = |lam: f64| u.iter().map(|&ui| inverse_link(reg, ui - lam)).sum::<f64>();
            // Duals must stay negative, so λ ranges over (max u, ∞).
            let top = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut lo = top;
            let mut hi = top + 1.0;
            while total(hi) > mass {
                hi = top + 2.0 * (hi - top);
            }
            for _ in 0..400 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if total(mid) > mass {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let lam = 0.5 * (lo + hi);
            u.iter().map(|&ui| inverse_link(reg, ui - lam)).collect()
        }
    }
}

fn ordered_partitions(items: &[usize]) -> Vec<Vec<Vec<usize>>> {
    if items.is_empty() {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    let n = items.len();
    for mask in 1u32..(1 << n) {
        let first: Vec<usize> = (0..n).filter(|k| mask & (1 << k) != 0).map(|k| items[k]).collect();
        let rest: Vec<usize> = (0..n).filter(|k| mask & (1 << k) == 0).map(|k| items[k]).collect();
        for mut tail in ordered_partitions(&rest) {
            tail.insert(0, first.clone());
            out.push(tail);
        }
    }
    out
}

/// `q` lies in the permutahedron of `alpha` (sorted nonincreasing): every
/// `k` largest coordinates sum to at most the `k` largest weights, with
/// equality for the full set.
pub fn in_permutahedron(q: &[f64], alpha: &[f64], tol: f64) -> bool {
    if q.iter().any(|&x| x < -tol) {
        return false;
    }
    let mut sorted = q.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut sq = 0.0;
    let mut sa = 0.0;
    for (x, a) in sorted.iter().zip(alpha) {
        sq += x;
        sa += a;
        if sq > sa + tol {
            return false;
        }
    }
    (sq - sa).abs() <= tol
}

/// Bregman projection of `q̃` onto the permutahedron of `alpha`, by face
/// enumeration. Exponential in `m`; meant for `m ≤ 5`.
pub fn face_enumeration_projection(reg: Regularizer, q_tilde: &[f64], alpha: &[f64]) -> Vec<f64> {
    let m = q_tilde.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for partition in ordered_partitions(&(0..m).collect::<Vec<_>>()) {
        let mut q = vec![0.0; m];
        let mut used = 0;
        for block in &partition {
            let mass: f64 = alpha[used..used + block.len()].iter().sum();
            used += block.len();
            for (&i, v) in block.iter().zip(solve_block(reg, q_tilde, block, mass)) {
                q[i] = v;
            }
        }
        if q.iter().any(|v| !v.is_finite()) || !in_permutahedron(&q, alpha, 1e-10) {
            continue;
        }
        let f = objective(reg, &q, q_tilde);
        if best.as_ref().map_or(true, |(b, _)| f < *b) {
            best = Some((f, q));
        }
    }
    best.expect("the vertex faces are always feasible").1
}
