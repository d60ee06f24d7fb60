//! Seed derivation.
//!
//! Every random stream in the crate is a ChaCha8 generator seeded with a
//! 64-bit value. Child seeds are derived from a parent seed and a list of
//! integer tags by folding each tag through the SplitMix64 finalizer:
//!
//! ```text
//! h = mix(parent ^ 0x9E3779B97F4A7C15)
//! for tag in tags: h = mix(h ^ mix(tag + 0x9E3779B97F4A7C15))
//! ```
//!
//! where `mix` is the SplitMix64 output function. The scheme only uses
//! wrapping 64-bit arithmetic, so any language can reproduce the streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from `parent` and an ordered list of tags.
pub fn derive(parent: u64, tags: &[u64]) -> u64 {
    let mut h = mix64(parent ^ GOLDEN);
    for &t in tags {
        h = mix64(h ^ mix64(t.wrapping_add(GOLDEN)));
    }
    h
}

/// Generator for a seed.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stage tags used by the harness when deriving per-repetition streams.
pub mod tag {
    pub const TRAIN: u64 = 1;
    pub const TEST: u64 = 2;
    pub const AMPUTE_TRAIN: u64 = 3;
    pub const AMPUTE_TEST: u64 = 4;
    pub const FIT: u64 = 5;
    pub const PREDICT: u64 = 6;
    pub const TREE: u64 = 7;
    pub const BOOTSTRAP: u64 = 8;
    pub const DRAWS: u64 = 9;
    pub const HIDDEN: u64 = 10;
}
