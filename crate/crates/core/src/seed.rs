//! Counter-based seed derivation.
//!
//! Stream `i` of base seed `s` is seeded with `splitmix64(s + (i + 1)·φ64)`
//! where `φ64 = 0x9E3779B97F4A7C15`. Streams depend only on `(s, i)`, so
//! results do not depend on how work is split across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// The splitmix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(base: u64, index: u64) -> u64 {
    splitmix64(base.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

/// Generator used for every random draw in the crate.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
