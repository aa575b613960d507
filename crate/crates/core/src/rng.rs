//! Counter-based seed derivation.
//!
//! Every random quantity in a run is keyed by `(master seed, stream, index)`
//! so results never depend on how work is scheduled across threads.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

pub type SimRng = Xoshiro256PlusPlus;

/// Sub-stream labels used when deriving per-trial generators.
pub mod stream {
    pub const CHANGE_TIME: u64 = 0x01;
    pub const OBSERVATIONS: u64 = 0x02;
    pub const POLICY: u64 = 0x03;
    pub const TRIAL: u64 = 0x10;
    pub const PATH: u64 = 0x20;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a parent seed, a stream label and an index.
#[inline]
pub fn derive_seed(parent: u64, stream: u64, index: u64) -> u64 {
    let a = splitmix64(parent ^ splitmix64(stream.wrapping_mul(0xD1B5_4A32_D192_ED03)));
    splitmix64(a ^ splitmix64(index.wrapping_add(0x632B_E59B_D9B4_E019)))
}

/// A generator for the `index`-th item of `stream` under `parent`.
#[inline]
pub fn child_rng(parent: u64, stream: u64, index: u64) -> SimRng {
    SimRng::seed_from_u64(derive_seed(parent, stream, index))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn derivation_is_stable_and_separates_streams() {
        assert_eq!(derive_seed(7, 1, 3), derive_seed(7, 1, 3));
        assert_ne!(derive_seed(7, 1, 3), derive_seed(7, 2, 3));
        assert_ne!(derive_seed(7, 1, 3), derive_seed(7, 1, 4));
        assert_ne!(derive_seed(7, 1, 3), derive_seed(8, 1, 3));
        let a: u64 = child_rng(1, 2, 3).random();
        let b: u64 = child_rng(1, 2, 3).random();
        assert_eq!(a, b);
    }
}
