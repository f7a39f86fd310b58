//! Seeded randomness shared by every stochastic operation in the crate.
//!
//! The stream is Xoshiro256++ seeded from a 64-bit integer through SplitMix64
//! (`rand_xoshiro`'s `seed_from_u64`). All draws go through the helpers below,
//! which only consume `next_u64`, so the sequence of values is easy to
//! reproduce outside Rust:
//!
//! * `unit_f64`: `(next_u64 >> 11) * 2^-53`, uniform on `[0, 1)`.
//! * `uniform_index(n)`: the high 64 bits of `next_u64 * n` (multiply-shift).
//! * `shuffle`: Fisher–Yates from the back, `j = uniform_index(i + 1)`.
//! * `Gaussian`: Box–Muller on `u1 = 1 - unit_f64`, `u2 = unit_f64`, both
//!   outputs used (cosine first, then sine).

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

pub type Rng = Xoshiro256PlusPlus;

pub fn rng_from_seed(seed: u64) -> Rng {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent sub-seed from a base seed and a path of stream tags,
/// so that (say) round 3's query draw never shares a stream with round 3's
/// training shuffle.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    path.iter().fold(mix64(base), |acc, &tag| mix64(acc ^ mix64(tag)))
}

/// Stream tags used with [`derive_seed`].
pub mod stream {
    pub const SEED_SET: u64 = 1;
    pub const TRAIN: u64 = 2;
    pub const QUERY: u64 = 3;
    pub const SPLIT: u64 = 4;
    pub const CALIBRATE: u64 = 5;
}

pub fn unit_f64(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform integer in `0..n`. `n` must be nonzero.
pub fn uniform_index(rng: &mut impl RngCore, n: usize) -> usize {
    debug_assert!(n > 0);
    ((rng.next_u64() as u128 * n as u128) >> 64) as usize
}

pub fn shuffle<T>(rng: &mut impl RngCore, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = uniform_index(rng, i + 1);
        items.swap(i, j);
    }
}

/// `amount` distinct values from `0..n`, uniformly without replacement, in draw
/// order (partial Fisher–Yates from the front).
pub fn sample_indices(rng: &mut impl RngCore, n: usize, amount: usize) -> Vec<usize> {
    let amount = amount.min(n);
    let mut all: Vec<usize> = (0..n).collect();
    for i in 0..amount {
        let j = i + uniform_index(rng, n - i);
        all.swap(i, j);
    }
    all.truncate(amount);
    all
}

/// Standard normal sampler (Box–Muller).
#[derive(Debug, Default, Clone)]
pub struct Gaussian {
    spare: Option<f64>,
}

impl Gaussian {
    pub fn new() -> Self {
        Self { spare: None }
    }

    pub fn sample(&mut self, rng: &mut impl RngCore) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = 1.0 - unit_f64(rng);
        let u2 = unit_f64(rng);
        let radius = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(radius * theta.sin());
        radius * theta.cos()
    }
}
