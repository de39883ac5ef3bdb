//! Seed derivation for reproducible parallel work.
//!
//! Every unit of parallel work (a sampling chunk, a replicate, a sweep cell)
//! gets its own seed computed from the master seed and its index path:
//!
//! ```text
//! state = master
//! for each index i in path:
//!     state = splitmix64(state ^ splitmix64(i + 0x9E3779B97F4A7C15))
//! ```
//!
//! The result depends only on the master seed and the path, never on which
//! worker ran the unit, so outputs are identical for any worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// One step of the SplitMix64 output function.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `master` and an index path.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(master, |state, &i| splitmix64(state ^ splitmix64(i.wrapping_add(GOLDEN))))
}

/// Deterministic generator for a derived seed.
pub fn rng_for(master: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, path))
}
