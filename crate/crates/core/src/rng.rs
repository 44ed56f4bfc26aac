//! Portable random streams.
//!
//! Every random draw in the library comes from ChaCha8 with an explicit
//! 64-bit seed and stream id, so datasets and trajectories are identical
//! across platforms. Stream assignment:
//!
//! * stream `0` of the solver seed drives group sampling and oracle draws,
//! * stream `1 + i` of the dataset seed generates synthetic group `i`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub const SOLVER_STREAM: u64 = 0;

/// Stream id reserved for synthetic group `group`.
pub fn group_stream(group: usize) -> u64 {
    1 + group as u64
}

pub fn stream_rng(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Standard normal draw via the cosine branch of Box–Muller.
///
/// Uses two uniforms per draw and discards the sine branch, so the number of
/// words consumed per sample is fixed.
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // 1 - U maps [0, 1) onto (0, 1], keeping the log finite.
    let u1 = 1.0 - rng.gen::<f64>();
    let u2 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Uniform index in `0..n` by inverse transform of one `f64` draw.
pub fn uniform_index<R: Rng + ?Sized>(rng: &mut R, n: usize) -> usize {
    debug_assert!(n > 0);
    let idx = (rng.gen::<f64>() * n as f64) as usize;
    idx.min(n - 1)
}
