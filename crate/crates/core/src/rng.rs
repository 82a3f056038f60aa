//! Random streams.
//!
//! Every run is driven by a master seed. Stream `r` starts at the master state
//! of a Xoshiro256++ generator advanced by `r` jumps of 2^128 steps, so streams
//! are disjoint for any run shorter than 2^128 draws.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

pub type StreamRng = Xoshiro256PlusPlus;

/// Generator for stream `index` of `master`.
pub fn stream(master: u64, index: u64) -> StreamRng {
    let mut rng = StreamRng::seed_from_u64(master);
    for _ in 0..index {
        rng.jump();
    }
    rng
}

/// Streams `0..count` of `master`, built incrementally.
pub fn streams(master: u64, count: usize) -> Vec<StreamRng> {
    let mut rng = StreamRng::seed_from_u64(master);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        out.push(rng.clone());
        rng.jump();
    }
    out
}

/// Master seed for reference paths compared against a simulation run from `master`.
pub fn reference_seed(master: u64) -> u64 {
    master ^ 0x5eed_5eed_5eed_5eed
}
