//! Seed derivation. Every random draw in the crate comes from a ChaCha stream
//! keyed by the user seed plus a tuple of tags (split, epoch, sample index, ...),
//! so results do not depend on evaluation order or worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng_for(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    let mut stream = 0x5EED_u64;
    for &t in tags {
        stream = splitmix64(stream ^ t);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Tags used to keep the streams of different subsystems apart.
pub mod tag {
    pub const MASK: u64 = 1;
    pub const PHANTOM: u64 = 2;
    pub const NOISE: u64 = 3;
    pub const INIT: u64 = 4;
    pub const SHUFFLE: u64 = 5;
    pub const SMOOTHING: u64 = 6;
    pub const CHAIN: u64 = 7;
    pub const UNCERTAINTY: u64 = 8;
}
