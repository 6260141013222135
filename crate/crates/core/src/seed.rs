//! Deterministic derivation of per-sample RNG streams.
//!
//! Every estimator that uses randomness takes a 64-bit master seed and a
//! short tag naming the experiment phase, and sample `i` draws from its own
//! ChaCha8 stream seeded with
//!
//! ```text
//! stream(master, tag, i) = splitmix64(splitmix64(master ^ fnv1a(tag)) ^ i)
//! ```
//!
//! where `fnv1a` is the 64-bit FNV-1a hash of the tag bytes. Because the
//! stream depends only on (master, tag, i), results are identical no matter
//! how samples are scheduled across worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// One round of the SplitMix64 output function.
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// 64-bit FNV-1a hash.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Seed of the per-sample stream; see the module docs for the formula.
pub fn sample_seed(master: u64, tag: &str, index: u64) -> u64 {
    splitmix64(splitmix64(master ^ fnv1a(tag.as_bytes())) ^ index)
}

/// The per-sample RNG stream itself.
pub fn sample_rng(master: u64, tag: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(sample_seed(master, tag, index))
}
