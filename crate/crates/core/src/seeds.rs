//! Counter-based seed derivation.
//!
//! Every replicate, evaluation stream and restart gets its own seed computed
//! from the master seed and a path of counters, so results never depend on
//! which thread ran which piece of work.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Identifier of the derivation rule, recorded in run manifests.
pub const DERIVATION_RULE: &str = "splitmix64-fold/chacha8-v1";

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a counter path into the master seed.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(master), |acc, &c| {
        splitmix64(acc ^ splitmix64(c.wrapping_add(GOLDEN)))
    })
}

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stream tags keep unrelated uses of the same replicate index apart.
pub mod stream {
    pub const TRAIN: u64 = 1;
    pub const EVAL: u64 = 2;
    pub const RESTART: u64 = 3;
    pub const PROBE: u64 = 4;
}
