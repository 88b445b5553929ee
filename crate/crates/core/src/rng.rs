//! The single pseudo-random source used across the crate.
//!
//! Every stochastic step (injection, splits, negative sampling, weight
//! initialization, minibatch order, sampled decoding) draws from ChaCha8, a
//! counter-based generator whose output stream is fixed for a given 64-bit
//! seed on every platform. Independent sub-streams (one per column, per user,
//! ...) use ChaCha's 64-bit stream selector so results never depend on the
//! order in which streams are consumed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream `stream` of the generator seeded with `seed`.
pub fn substream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `floor(frac * n)` with a small guard against representation error
/// (e.g. `0.29 * 100 = 28.999999999999996`).
pub fn floor_count(frac: f64, n: usize) -> usize {
    let raw = frac * n as f64;
    let count = (raw + 1e-9).floor();
    (count.max(0.0) as usize).min(n)
}
