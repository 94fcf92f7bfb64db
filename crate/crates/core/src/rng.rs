//! Seeded random streams. Every consumer of randomness in a run draws from
//! its own xoshiro256** stream, keyed by the run seed, a stream tag and an
//! index (epoch, step, ...), so runs are reproducible bit for bit.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256StarStar;

pub type StreamRng = Xoshiro256StarStar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    BackboneInit = 1,
    HeadInit = 2,
    Shuffle = 3,
    Dropout = 4,
    Synthetic = 5,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic generator for `(seed, stream, index)`.
pub fn stream(seed: u64, which: Stream, index: u64) -> StreamRng {
    let key = splitmix64(splitmix64(splitmix64(seed) ^ which as u64) ^ index);
    // seed_from_u64 expands the key through splitmix64 into the full state
    Xoshiro256StarStar::seed_from_u64(key)
}
