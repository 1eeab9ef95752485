//! Seeded randomness with a fixed, platform-independent draw sequence.
//!
//! The generator is ChaCha8 keyed by `SHA-256(seed_le)` (or
//! `SHA-256(seed_le || 0x00 || key)` for named substreams). Bounded draws use
//! rejection sampling on 64-bit outputs, so results do not depend on the
//! `rand` crate's distribution code.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        let key: [u8; 32] = Sha256::digest(seed.to_le_bytes()).into();
        Self {
            seed,
            inner: ChaCha8Rng::from_seed(key),
        }
    }

    /// Independent substream for `key`. Streams for different keys do not
    /// depend on each other or on draw order, which keeps parallel work
    /// reproducible.
    pub fn derive(seed: u64, key: &str) -> Self {
        let mut h = Sha256::new();
        h.update(seed.to_le_bytes());
        h.update([0u8]);
        h.update(key.as_bytes());
        let key: [u8; 32] = h.finalize().into();
        Self {
            seed,
            inner: ChaCha8Rng::from_seed(key),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform integer in `[0, n)`. `n` must be positive.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        // Largest multiple of n that fits; reject the tail to stay unbiased.
        let zone = u64::MAX - (u64::MAX - n + 1) % n;
        loop {
            let x = self.next_u64();
            if x <= zone {
                return x % n;
            }
        }
    }

    pub fn below_usize(&mut self, n: usize) -> usize {
        self.below(n as u64) as usize
    }

    /// Uniform float in `[0, 1)` with 53 bits of precision.
    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// In-place Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below_usize(i + 1);
            items.swap(i, j);
        }
    }
}
