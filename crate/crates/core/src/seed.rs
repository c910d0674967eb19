//! Seed plumbing. Every random stream in the toolkit is a ChaCha8 generator
//! seeded from a master seed through [`derive`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer. A bijection on `u64`.
pub fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for `(stream, index)` under `master`. Distinct indices within a
/// stream always give distinct seeds.
pub fn derive(master: u64, stream: u64, index: u64) -> u64 {
    let base = mix(master ^ mix(stream.wrapping_add(1).wrapping_mul(GOLDEN)));
    mix(base.wrapping_add(index.wrapping_mul(GOLDEN)))
}

pub fn rng(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream tags used by the pipeline.
pub mod stream {
    pub const DATASET: u64 = 1;
    pub const CV_FOLDS: u64 = 2;
    pub const REPLICATION: u64 = 3;
    pub const OBJECTIVE_NOISE: u64 = 4;
}
