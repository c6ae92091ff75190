//! Seed derivation. Every random stream in the crate is a ChaCha8 generator
//! keyed by a base seed, a purpose tag and an index, so independent consumers
//! never share a stream and adding a new consumer never shifts existing ones.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn fnv1a(tag: &str) -> u64 {
    tag.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Derives a child seed for `purpose` and `index` from `base`.
pub fn derive_seed(base: u64, purpose: &str, index: u64) -> u64 {
    splitmix64(splitmix64(base ^ fnv1a(purpose)).wrapping_add(splitmix64(index)))
}

pub fn stream(base: u64, purpose: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, purpose, index))
}
