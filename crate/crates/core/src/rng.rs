//! Seeded random streams.
//!
//! Every stochastic routine takes an explicit [`Rng`] stream.
//! Independent streams for seed sweeps and resampling are derived from a
//! master seed with [`derive_seed`], so concurrent runs stay reproducible.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used throughout the crate.
pub type Rng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the `index`-th child stream of `master`.
///
/// Distinct `(master, index)` pairs give statistically independent streams;
/// the map is a pure function so sweeps can be replayed in any order.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    mix(mix(master) ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

pub fn derived_rng(master: u64, index: u64) -> Rng {
    rng_from_seed(derive_seed(master, index))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    #[test]
    fn derived_streams_differ_and_replay() {
        let a = derive_seed(7, 0);
        let b = derive_seed(7, 1);
        assert_ne!(a, b);
        assert_eq!(a, derive_seed(7, 0));
        let x: u64 = derived_rng(7, 3).gen();
        let y: u64 = derived_rng(7, 3).gen();
        assert_eq!(x, y);
    }
}
