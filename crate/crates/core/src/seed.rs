//! Seed derivation.
//!
//! Every random stream in the crate is a `ChaCha8Rng` seeded through
//! [`SeedableRng::seed_from_u64`]. Subordinate seeds are derived from a
//! master seed with the SplitMix64 finalizer so that any row or trial can be
//! regenerated in isolation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Name of the generator family, recorded in dataset metadata.
pub const RNG_FAMILY: &str = "ChaCha8Rng/seed_from_u64";

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// Salt mixed into a row seed to obtain the seed of its labelling search.
pub const LABEL_SEARCH_SALT: u64 = 0x4d43_5341_4c41_4245; // "MCSALABE"
/// Salt for searches run during evaluation, disjoint from labelling.
pub const EVAL_SEARCH_SALT: u64 = 0x4556_414c_5345_4152; // "EVALSEAR"

/// SplitMix64 output function.
pub fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives the seed of stream `index` under `master`.
pub fn derive(master: u64, index: u64) -> u64 {
    splitmix64(master.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
