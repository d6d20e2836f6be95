//! Seed derivation for reproducible parallel streams. Every replicate draws
//! from its own ChaCha8 generator keyed by `(seed, path)`, so results do not
//! depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a path of indices into the base seed.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(seed), |acc, v| splitmix64(acc ^ splitmix64(*v)))
}

pub fn stream(seed: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, path))
}

/// Domain tags that keep streams of different purposes apart.
pub mod tag {
    pub const PANEL: u64 = 1;
    pub const BOOTSTRAP: u64 = 2;
    pub const RETRY: u64 = 3;
}
