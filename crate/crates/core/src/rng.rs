//! Seeded, splittable pseudo-random streams.
//!
//! Every stochastic routine takes a `(seed, stream)` pair so independent
//! checks draw from non-overlapping sequences regardless of call order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use rand::Rng;

pub type SeededRng = ChaCha8Rng;

/// Generator for stream `stream` of `seed`.
pub fn seeded(seed: u64, stream: u64) -> SeededRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Standard normal sample.
pub fn normal(rng: &mut SeededRng) -> f64 {
    rng.sample(rand_distr::StandardNormal)
}

/// Vector of `n` uniform samples in `[lo, hi)`.
pub fn uniform_vec(rng: &mut SeededRng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// Vector of `n` standard normal samples.
pub fn normal_vec(rng: &mut SeededRng, n: usize) -> Vec<f64> {
    (0..n).map(|_| normal(rng)).collect()
}
