//! Keyed random streams.
//!
//! Every draw in the crate comes from a ChaCha8 stream whose 256-bit key is
//! the tuple `(seed, purpose, index, path)` written verbatim. Distinct keys
//! give independent streams and the same key always replays the same draws,
//! so paths can be scheduled on any number of threads without changing a bit.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// What a stream is used for; part of the key so purposes never share draws.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    PathSample = 1,
    TermStats = 2,
    Martingale = 3,
    ScenarioGen = 4,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub seed: u64,
    pub purpose: Purpose,
    pub index: u64,
    pub path: u64,
}

impl StreamKey {
    pub fn new(seed: u64, purpose: Purpose, index: u64, path: u64) -> Self {
        StreamKey {
            seed,
            purpose,
            index,
            path,
        }
    }

    pub fn stream(&self) -> Stream {
        let mut key = [0u8; 32];
        key[0..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&(self.purpose as u64).to_le_bytes());
        key[16..24].copy_from_slice(&self.index.to_le_bytes());
        key[24..32].copy_from_slice(&self.path.to_le_bytes());
        Stream(ChaCha8Rng::from_seed(key))
    }
}

#[derive(Clone, Debug)]
pub struct Stream(ChaCha8Rng);

impl RngCore for Stream {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.0.fill_bytes(dst)
    }
}
