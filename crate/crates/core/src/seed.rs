//! Deterministic seed derivation.
//!
//! Every stochastic step in the pipeline draws from a ChaCha stream whose
//! seed is derived from a master seed and a textual tag, so that partial
//! reruns reproduce exactly the same draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, b| (h ^ u64::from(*b)).wrapping_mul(FNV_PRIME))
}

/// Child seed for `(parent, tag)`: `mix64(parent ^ fnv1a(tag))`.
pub fn child_seed(parent: u64, tag: &str) -> u64 {
    mix64(parent ^ fnv1a(tag.as_bytes()))
}

/// Combines a seed with a sequence of words.
pub fn combine(seed: u64, words: &[u64]) -> u64 {
    words.iter().fold(mix64(seed), |h, w| mix64(h ^ *w))
}

/// Hash of a real vector by its bit patterns. `-0.0` and `0.0` hash equal.
pub fn hash_reals(values: &[f64]) -> u64 {
    values.iter().fold(FNV_OFFSET, |h, v| {
        let bits = if *v == 0.0 { 0 } else { v.to_bits() };
        mix64(h ^ bits)
    })
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
