//! Seed derivation.
//!
//! Every random stream in the crate (one per tree, one per synthetic image,
//! one per calibration image) is derived from a single master seed and a
//! short path of stream coordinates:
//!
//! ```text
//! state = splitmix64(master)
//! for c in path: state = splitmix64(state ^ splitmix64(c + 0x9E3779B97F4A7C15))
//! ```
//!
//! The result seeds a ChaCha8 generator. Streams therefore depend only on
//! their coordinates, never on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// One round of the SplitMix64 finalizer.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(master), |state, &c| {
        splitmix64(state ^ splitmix64(c.wrapping_add(GOLDEN)))
    })
}

pub fn stream(master: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, path))
}

/// Stream namespaces, so that e.g. tree 3 and image 3 never share a seed.
pub(crate) mod domain {
    pub const TREE: u64 = 1;
    pub const SYNTH: u64 = 2;
    pub const CALIBRATION: u64 = 3;
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a = stream(0, &[1, 2]).next_u64();
        let b = stream(0, &[1, 2]).next_u64();
        let c = stream(0, &[2, 1]).next_u64();
        let d = stream(1, &[1, 2]).next_u64();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }

    #[test]
    fn splitmix_known_value() {
        // First output of the reference SplitMix64 generator seeded with 0.
        assert_eq!(splitmix64(0), 0xE220_A839_7B1D_CDAF);
    }
}
