//! Seed derivation. Every random stream in a run is a pure function of the
//! run seed and a small path of labels, so replications, days and sweep
//! cells can be evaluated in any order (or concurrently) and still produce
//! bit-identical results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Stream labels, kept distinct so that e.g. day 3 and replication 3 never
/// share a seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Population = 1,
    Noise = 2,
    Adoption = 3,
    Replication = 4,
    Day = 5,
    Bound = 6,
    Cell = 7,
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Child seed for `(stream, index)` under `parent`.
pub fn derive(parent: u64, stream: Stream, index: u64) -> u64 {
    splitmix64(splitmix64(parent ^ splitmix64(stream as u64)) ^ index)
}

pub fn rng(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}
