//! Seeded random streams.
//!
//! All randomness is drawn from ChaCha8 (a counter-based stream cipher
//! generator). A single user seed is split into named substreams by selecting
//! the ChaCha stream id, so the data, initialization, shuffle and evaluation
//! draws never share state and each can be regenerated on its own.
//! Gaussian draws use the `rand_distr` standard normal sampler.

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type Rng = ChaCha8Rng;

/// Named substreams of a run seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Data = 1,
    Init = 2,
    Shuffle = 3,
    Eval = 4,
    Augment = 5,
    Test = 6,
}

/// Generator for `stream` of `seed`.
pub fn stream(seed: u64, stream: Stream) -> Rng {
    substream(seed, stream as u64)
}

/// Generator for an arbitrary numeric substream id.
pub fn substream(seed: u64, id: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Generator keyed by (seed, stream, index), e.g. one per epoch.
pub fn indexed(seed: u64, stream: Stream, index: u64) -> Rng {
    substream(seed, ((stream as u64) << 32) | (index & 0xffff_ffff))
}

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[inline]
pub fn normal(rng: &mut Rng) -> f64 {
    rng.sample(StandardNormal)
}

#[inline]
pub fn uniform(rng: &mut Rng) -> f64 {
    rng.random::<f64>()
}

/// Fisher-Yates shuffle of `0..n`.
pub fn permutation(n: usize, rng: &mut Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        idx.swap(i, j);
    }
    idx
}
