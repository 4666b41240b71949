//! Deterministic seed derivation.
//!
//! Every stochastic step (downsampling, initialization, scenario draws,
//! Monte Carlo runs, fold shuffling) derives its own stream from a base seed
//! and a purpose tag, so results are reproducible and independent of worker
//! count or evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Purpose tags for derived streams.
#[derive(Debug, Clone, Copy)]
pub enum Stream {
    Downsample = 1,
    Init = 2,
    Scenario = 3,
    Truth = 4,
    Folds = 5,
    GridSample = 6,
    Run = 7,
}

/// SplitMix64 finalizer; decorrelates structured inputs.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

pub fn derive(base: u64, stream: Stream, index: u64) -> u64 {
    mix(mix(base ^ (stream as u64).wrapping_mul(0xa076_1d64_78bd_642f)) ^ index)
}

pub fn rng(base: u64, stream: Stream, index: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(derive(base, stream, index))
}
