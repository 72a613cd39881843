//! Counter-based seed derivation.
//!
//! Every stochastic routine in the crate takes an explicit `u64` seed. Independent
//! streams (per Monte Carlo sample, per epoch, per sweep cell) are obtained by
//! mixing the parent seed with a stream index, so results never depend on how
//! work is partitioned across threads.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

/// Generator used everywhere in the crate.
pub type Rng = Xoshiro256PlusPlus;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for stream `stream` of `parent`.
pub fn derive(parent: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(parent) ^ stream.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

/// Generator seeded from `seed`.
pub fn rng(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Generator for stream `stream` of `parent`.
pub fn stream_rng(parent: u64, stream: u64) -> Rng {
    rng(derive(parent, stream))
}
