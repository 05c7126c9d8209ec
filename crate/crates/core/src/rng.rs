//! Seed management. Every stochastic draw in the crate comes from a ChaCha8
//! stream keyed by a master seed and selected by a 64-bit stream id, so that
//! sample `i` of a job is reproducible independently of any other sample.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type StreamRng = ChaCha8Rng;

/// Generator family recorded in configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RngKind {
    #[default]
    Chacha8,
}

/// Splittable seed source: one master seed, many independent streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedStream {
    master: u64,
}

const RETRY_SALT: u64 = 0x9E37_79B9_7F4A_7C15;

impl SeedStream {
    pub fn new(master: u64) -> Self {
        SeedStream { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    pub fn rng(&self, stream: u64) -> StreamRng {
        self.rng_retry(stream, 0)
    }

    /// Stream `stream` re-keyed for the `retry`-th resampling attempt.
    pub fn rng_retry(&self, stream: u64, retry: u32) -> StreamRng {
        let key = self.master ^ (retry as u64).wrapping_mul(RETRY_SALT);
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        rng.set_stream(stream);
        rng
    }

    /// Derived seed source for a named sub-task.
    pub fn child(&self, tag: u64) -> SeedStream {
        let mut x = self.master ^ tag.wrapping_mul(0xBF58_476D_1CE4_E5B9);
        x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        SeedStream::new(x ^ (x >> 31))
    }
}
