//! Seed plumbing. Every random draw in the crate comes from a `ChaCha8Rng`
//! built from an explicit `u64` seed, and independent work items (ensemble
//! members, replicates, grid cells) get child seeds derived by mixing.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SeededRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

// splitmix64 finalizer
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives the seed of the `index`-th child stream of `master`.
pub fn child_seed(master: u64, index: u64) -> u64 {
    mix(mix(master.wrapping_add(0x9e37_79b9_7f4a_7c15)) ^ mix(index.wrapping_add(0x632b_e59b_d9b4_e019)))
}
