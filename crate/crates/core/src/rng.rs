//! Keyed random streams.
//!
//! Every random decision in training and augmentation is drawn from a stream
//! keyed by a tuple such as `(seed, epoch, step, slot)`, so results do not
//! depend on the order in which clips are processed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a sequence of keys into a single 64-bit seed.
pub fn derive_seed(keys: &[u64]) -> u64 {
    keys.iter()
        .fold(0x5EED_u64, |acc, &k| splitmix64(acc ^ splitmix64(k)))
}

/// A ChaCha stream for the given key tuple.
pub fn keyed(keys: &[u64]) -> Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(keys))
}

/// Stream domains, so two subsystems sharing a seed never share a stream.
pub mod domain {
    pub const SYNTH: u64 = 1;
    pub const BATCH: u64 = 2;
    pub const POLICY: u64 = 3;
    pub const INIT: u64 = 4;
    pub const SPLIT: u64 = 5;
}
