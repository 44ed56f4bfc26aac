//! Stochastic no-regret dynamics for generalized group distributionally
//! robust optimization: minimize over a model θ the worst weighting
//! `max_{q∈Q} Σ_i q_i L_i(θ)` of per-group expected losses, where `Q` is the
//! simplex, a capped simplex or a permutahedron.
//!
//! The model player runs projected online gradient descent, the weight player
//! runs online mirror descent (Hedge/EXP3, Tsallis-INF, EXP3P) fed by
//! importance-weighted bandit estimates, so each iteration touches a single
//! group's data.

pub mod data;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod learners;
pub mod lower_bound;
pub mod problem;
pub mod rng;
pub mod solvers;

pub use error::{GdroError, Result};
