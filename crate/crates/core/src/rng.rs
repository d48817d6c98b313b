//! Seeded random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 stream keyed by
//! `(seed, stream index)`. Workers that own distinct stream indices are
//! independent, and the result of a batch never depends on thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Identifier written into report headers and run manifests.
pub const ALGORITHM_ID: &str = "ChaCha8Rng/seed_from_u64(seed)/set_stream(index)";

pub type StreamRng = ChaCha8Rng;

pub fn stream(seed: u64, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Derives a child seed; used when one experiment spawns several seeded
/// sub-experiments (calibration replicas, batches per schedule entry).
pub fn derive_seed(seed: u64, salt: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
