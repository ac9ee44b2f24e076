//! Reproducible random streams.
//!
//! Every replica, tree or reference run draws from its own ChaCha8 stream whose
//! seed is `derive_seed(master, index, tag)`. The derivation composes three
//! rounds of the SplitMix64 finaliser, each a bijection of `u64`, so for fixed
//! `(master, tag)` distinct indices always yield distinct seeds.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator used for all simulation streams.
pub type SimRng = ChaCha8Rng;

/// Identifier of the seed derivation scheme, stored alongside seeds in configs.
pub const SEED_SCHEME: &str = "splitmix64-chain-v1";

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// Stream tags separating independent uses of one master seed.
pub mod tags {
    pub const INIT: u64 = 1;
    pub const DYNAMICS: u64 = 2;
    pub const REFERENCE_INIT: u64 = 3;
    pub const REFERENCE_DYNAMICS: u64 = 4;
    pub const METRIC: u64 = 5;
    pub const TREE: u64 = 6;
    pub const ENVIRONMENT: u64 = 7;
    pub const CALIBRATION: u64 = 8;
    pub const SIGMA: u64 = 9;
    pub const POISSON: u64 = 10;
}

/// SplitMix64 output finaliser.
#[must_use]
pub fn mix64(z: u64) -> u64 {
    let mut z = z;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the seed of stream `index` under `tag` from a master seed.
#[must_use]
pub fn derive_seed(master: u64, index: u64, tag: u64) -> u64 {
    let h = mix64(master.wrapping_add(GOLDEN_GAMMA));
    let h = mix64((h ^ index).wrapping_add(GOLDEN_GAMMA));
    mix64((h ^ tag).wrapping_add(GOLDEN_GAMMA))
}

/// Generator for stream `index` under `tag`.
#[must_use]
pub fn stream(master: u64, index: u64, tag: u64) -> SimRng {
    SimRng::seed_from_u64(derive_seed(master, index, tag))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn finaliser_matches_reference_splitmix() {
        // First output of SplitMix64 seeded with 0 (state advanced by gamma once).
        assert_eq!(mix64(GOLDEN_GAMMA), 0xE220_A839_7B1D_CDAF);
    }

    #[test]
    fn indices_never_collide() {
        let seeds: HashSet<u64> = (0..100_000).map(|i| derive_seed(42, i, tags::DYNAMICS)).collect();
        assert_eq!(seeds.len(), 100_000);
    }

    #[test]
    fn tags_separate_streams() {
        assert_ne!(derive_seed(7, 3, tags::INIT), derive_seed(7, 3, tags::DYNAMICS));
    }
}
