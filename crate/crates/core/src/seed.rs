//! Seed derivation.
//!
//! A single global seed fans out to per-stage and per-item seeds:
//!
//! ```text
//! stage_seed(global, name) = splitmix64(global ^ fnv1a64(name))
//! item_seed(seed, index)   = splitmix64(seed ^ splitmix64(index + 1))
//! ```
//!
//! Each derived seed initialises an independent `ChaCha8Rng`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn stage_seed(global: u64, stage: &str) -> u64 {
    splitmix64(global ^ fnv1a64(stage.as_bytes()))
}

pub fn item_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index.wrapping_add(1)))
}

pub fn rng_from(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn item_rng(seed: u64, index: u64) -> Rng {
    rng_from(item_seed(seed, index))
}
