//! Seeded random sources.
//!
//! Every stochastic routine takes an explicit [`SimRng`]. Sub-streams (table
//! rows, replicates, power cells) are derived from a parent seed and an index
//! with SplitMix64 so results never depend on scheduling order.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

/// The generator used throughout the crate. Xoshiro256++ has a fixed,
/// documented output sequence, so seeded runs are portable.
pub type SimRng = Xoshiro256PlusPlus;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for the `index`-th child stream of `seed`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ index.wrapping_mul(GOLDEN).rotate_left(17))
}

pub fn rng_from_seed(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

/// Generator for the `index`-th child stream of `seed`.
pub fn child_rng(seed: u64, index: u64) -> SimRng {
    rng_from_seed(derive_seed(seed, index))
}

/// Fixed-point threshold so that `u < threshold` for a uniform `u: u64`
/// happens with probability `p` (to 2^-64 resolution). `p >= 1` maps to
/// `None`, meaning "always".
pub(crate) fn bernoulli_threshold(p: f64) -> Option<u64> {
    if p >= 1.0 {
        None
    } else if p <= 0.0 {
        Some(0)
    } else {
        // 2^64 * p, exact for the grid values we care about up to rounding.
        Some((p * 18_446_744_073_709_551_616.0) as u64)
    }
}

#[inline]
pub(crate) fn bernoulli_draw(rng: &mut SimRng, threshold: Option<u64>) -> bool {
    use rand::RngCore;
    match threshold {
        None => true,
        Some(0) => false,
        Some(th) => rng.next_u64() < th,
    }
}
