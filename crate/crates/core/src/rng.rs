//! Counter-based RNG streams.
//!
//! Every random draw in the crate comes from a ChaCha8 generator whose seed is
//! a pure function of the run seed and a tuple of integer coordinates
//! (replicate, attempt, slot, ...). Work items can therefore run in any order
//! or on any thread and still see the same numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags keep unrelated consumers of the same seed apart.
pub(crate) mod tag {
    pub const BOOT_SELECT: u64 = 0x5e1ec7;
    pub const BOOT_RESIDUALS: u64 = 0x4e51d0;
    pub const LOOCV_SELECT: u64 = 0x100c5e;
    pub const LOOCV_ITER: u64 = 0x100c17;
    pub const SIM_SERIES: u64 = 0x5e41e5;
    pub const SIM_BOOT: u64 = 0x5b0075;
    pub const SIM_LOOCV: u64 = 0x5100cf;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a base seed with an ordered list of coordinates into a new 64-bit seed.
pub fn derive_seed(seed: u64, coords: &[u64]) -> u64 {
    coords
        .iter()
        .fold(splitmix64(seed), |acc, &c| splitmix64(acc ^ splitmix64(c)))
}

pub fn stream(seed: u64, coords: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, coords))
}
