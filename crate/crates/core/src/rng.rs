//! Seed derivation. Every random stream in a run is a ChaCha8 generator keyed
//! by the run seed and a stream label, so adding a new consumer never shifts
//! the draws of an existing one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// SplitMix64 finaliser.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(seed: u64, stream: &str, index: u64) -> u64 {
    let mut h = mix(seed);
    for b in stream.bytes() {
        h = mix(h ^ u64::from(b));
    }
    mix(h ^ index)
}

pub fn stream(seed: u64, name: &str) -> SimRng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, name, 0))
}

pub fn indexed_stream(seed: u64, name: &str, index: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, name, index))
}
