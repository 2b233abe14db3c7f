//! Deterministic random streams.
//!
//! Every stream is a ChaCha8 generator keyed by a 64-bit sub-seed. Sub-seeds
//! are derived from the run seed and a path of integers (replicate index,
//! pass number, purpose tag) with SplitMix64 mixing, so replicate `r` of run
//! `seed` always sees the same numbers regardless of scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Purpose tags for sub-seed paths.
pub mod tag {
    pub const PASS1: u64 = 0x5041_5353_0001;
    pub const PASS2: u64 = 0x5041_5353_0002;
    pub const LINE: u64 = 0x4c49_4e45;
    pub const DIRECT_1D: u64 = 0x4449_5231;
    pub const SAMPLER: u64 = 0x5341_4d50;
    pub const PILOT: u64 = 0x5049_4c54;
}

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// `hash(seed, path...)`.
pub fn sub_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(seed), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn rng_from(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn stream(seed: u64, path: &[u64]) -> Rng {
    rng_from(sub_seed(seed, path))
}

/// Stream for replicate `r` of a run.
pub fn replicate(seed: u64, r: u64) -> Rng {
    stream(seed, &[r])
}
