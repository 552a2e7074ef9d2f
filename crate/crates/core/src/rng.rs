//! Named random sub-streams derived from one user seed.
//!
//! Every consumer (dataset generation, initialization, shuffling, ...) asks
//! for its own stream keyed by two counters, so the draws of one component
//! do not depend on how many numbers another component consumed, nor on
//! which thread runs it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stream {
    Dataset = 1,
    Init = 2,
    Shuffle = 3,
    Split = 4,
    Check = 5,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

pub fn derive(seed: u64, stream: Stream, a: u64, b: u64) -> u64 {
    let mut h = splitmix64(seed);
    h = splitmix64(h ^ stream as u64);
    h = splitmix64(h ^ a);
    splitmix64(h ^ b)
}

pub fn stream(seed: u64, stream: Stream, a: u64, b: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive(seed, stream, a, b))
}
