//! Named random streams derived from a single master seed.
//!
//! Every consumer of randomness asks for a stream by name (for example
//! `"certify/secant"`). The stream seed depends only on the master seed and
//! the name, so adding a new consumer never shifts the numbers another
//! consumer sees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type LabRng = ChaCha8Rng;

/// Master seed plus a path of stream names.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedStream {
    key: u64,
}

impl SeedStream {
    pub fn new(master: u64) -> Self {
        Self { key: splitmix64(master ^ 0x6a09_e667_f3bc_c908) }
    }

    /// Child stream identified by `name`.
    pub fn derive(&self, name: &str) -> Self {
        Self { key: splitmix64(self.key ^ fnv1a(name.as_bytes())) }
    }

    /// Child stream identified by an index, used for per-batch or per-restart streams.
    pub fn index(&self, i: u64) -> Self {
        Self { key: splitmix64(self.key.wrapping_add(splitmix64(i.wrapping_add(0x9e37_79b9)))) }
    }

    pub fn rng(&self) -> LabRng {
        LabRng::seed_from_u64(self.key)
    }

    pub fn key(&self) -> u64 {
        self.key
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
