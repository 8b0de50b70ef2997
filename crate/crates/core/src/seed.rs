//! Deterministic seed derivation.
//!
//! Every randomized component owns its generator, seeded from a parent seed
//! mixed with a stable tag (a component name or a run index). There is no
//! global RNG, so results do not depend on thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator used throughout the crate.
pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(tag: &str) -> u64 {
    tag.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Derive a child seed from `seed` and a textual tag.
pub fn derive(seed: u64, tag: &str) -> u64 {
    splitmix64(seed ^ splitmix64(fnv1a(tag)))
}

/// Derive a child seed from `seed` and an index (run, tree, round, ...).
pub fn derive_index(seed: u64, index: u64) -> u64 {
    splitmix64(seed.wrapping_add(splitmix64(index.wrapping_add(0x5851_F42D_4C95_7F2D))))
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rng_for(seed: u64, tag: &str) -> Rng {
    rng(derive(seed, tag))
}
