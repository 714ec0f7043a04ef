//! Deterministic seed derivation.
//!
//! Every random stream in the crate is keyed by a tuple of integers mixed
//! through SplitMix64, so results never depend on scheduling or on the order
//! in which independent jobs run.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a base seed with a sequence of stream coordinates.
pub fn derive(seed: u64, coords: &[u64]) -> u64 {
    coords
        .iter()
        .fold(splitmix64(seed), |acc, &c| splitmix64(acc ^ splitmix64(c)))
}

pub fn rng(seed: u64, coords: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, coords))
}

/// SplitMix64 as a generator: cheap to key, so simulation can open one
/// stream per (unit, node) pair.
#[derive(Debug, Clone)]
pub struct SplitMix {
    state: u64,
}

impl SplitMix {
    pub fn new(seed: u64, coords: &[u64]) -> Self {
        SplitMix {
            state: derive(seed, coords),
        }
    }
}

impl RngCore for SplitMix {
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        let out = splitmix64(self.state);
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        out
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let b = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&b[..chunk.len()]);
        }
    }
}

/// FNV-1a over bytes; stable across platforms and compiler versions.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

pub fn hash_str(s: &str) -> u64 {
    fnv1a(s.as_bytes())
}
