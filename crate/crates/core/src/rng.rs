//! Counter-based random streams.
//!
//! Every random draw in a run comes from a ChaCha stream keyed by
//! `(seed, iteration, node, purpose)`. Two draws never share a stream, so
//! results do not depend on the order in which workers are evaluated.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// What a stream is used for. Part of the stream key.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    /// Gradient noise and compression on one worker.
    Worker = 1,
    /// Drawing the participating subset.
    Sampling = 2,
    /// Weighted reservoir selection of the output point.
    Output = 3,
    /// Monte-Carlo certification and other harness-side draws.
    Harness = 4,
}

/// Root of all streams for one run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RngStreams {
    seed: u64,
}

impl RngStreams {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self, iteration: u64, node: u64, purpose: Purpose) -> StreamRng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&iteration.to_le_bytes());
        key[16..24].copy_from_slice(&node.to_le_bytes());
        key[24..].copy_from_slice(&(purpose as u64).to_le_bytes());
        ChaCha8Rng::from_seed(key)
    }

    pub fn worker(&self, iteration: u64, node: usize) -> StreamRng {
        self.stream(iteration, node as u64, Purpose::Worker)
    }

    pub fn sampling(&self, iteration: u64) -> StreamRng {
        self.stream(iteration, 0, Purpose::Sampling)
    }

    pub fn output(&self, iteration: u64) -> StreamRng {
        self.stream(iteration, 0, Purpose::Output)
    }
}
