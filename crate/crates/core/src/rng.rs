//! Seed derivation and the generator used everywhere in the crate.
//!
//! All randomness flows from ChaCha8 (`rand_chacha::ChaCha8Rng`), a
//! counter-based stream cipher generator whose output is specified
//! independently of platform and word size. Child seeds are derived with
//! the SplitMix64 finalizer, so a stream is a pure function of the path of
//! indices that leads to it: adding replicates never changes the seeds of
//! earlier ones.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// SplitMix64 finalizer (Steele, Lea & Flood 2014).
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from a parent seed and one index.
#[inline]
pub fn split(seed: u64, index: u64) -> u64 {
    mix64(mix64(seed) ^ mix64(index.wrapping_add(0xA076_1D64_78BD_642F)))
}

/// Derive a child seed from a parent seed and a path of indices.
pub fn split_path(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(seed, |s, &i| split(s, i))
}

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform draw in [0, 1) from a 64-bit hash; used where a value must be a
/// fixed function of an index rather than of a stream position.
pub fn hash_unit(seed: u64, index: u64) -> f64 {
    (split(seed, index) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}
