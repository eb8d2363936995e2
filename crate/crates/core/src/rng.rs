//! Seed derivation for deterministic stage-local RNGs.
//!
//! Every randomized stage gets its own ChaCha stream, derived from the run
//! seed and a stage tag. Stages therefore stay bit-reproducible regardless
//! of how many random draws other stages make, and a stagewise run through
//! persisted intermediates consumes exactly the same streams as a
//! single-shot run.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer; good avalanche, stable across platforms.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a sub-seed from a base seed and a stage tag.
pub fn derive_seed(base: u64, tag: &str) -> u64 {
    let mut h = mix(base ^ 0x51ed_2701_8c9f_3b1d);
    for &b in tag.as_bytes() {
        h = mix(h ^ u64::from(b));
    }
    h
}

/// Derive a sub-seed additionally keyed by an index (one stream per item).
pub fn derive_seed_indexed(base: u64, tag: &str, index: u64) -> u64 {
    mix(derive_seed(base, tag) ^ mix(index))
}

/// The crate-wide RNG: seeded ChaCha, identical stream on every platform.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
