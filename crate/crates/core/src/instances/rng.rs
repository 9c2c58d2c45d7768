//! Seeded sampling used by every generator.
//!
//! The stream is ChaCha8 (`rand_chacha` 0.3, `ChaCha8Rng::seed_from_u64`)
//! read 64 bits at a time through `next_u64`. Sampling is done here rather
//! than through `rand`'s distributions so that another implementation of
//! ChaCha8 can reproduce generated instances bit for bit:
//!
//! * `unit()`: `(next_u64 >> 11) * 2^-53`, uniform on `[0, 1)`.
//! * `range_f64(lo, hi)`: `lo + (hi - lo) * unit()`.
//! * `open_upper(hi)`: `hi * (1 - unit())`, uniform on `(0, hi]`.
//! * `range_u32(lo, hi)` (inclusive): with `span = hi - lo + 1`, draw
//!   `x = next_u64` until `x < 2^64 - (2^64 mod span)`, return
//!   `lo + x mod span`.
//! * `chance(p)`: `unit() < p`.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const RNG_NAME: &str = "chacha8/rand_chacha-0.3/seed_from_u64";

#[derive(Debug, Clone)]
pub struct Sampler {
    rng: ChaCha8Rng,
}

impl Sampler {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn range_f64(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    pub fn open_upper(&mut self, hi: f64) -> f64 {
        hi * (1.0 - self.unit())
    }

    pub fn range_u32(&mut self, lo: u32, hi: u32) -> u32 {
        assert!(lo <= hi, "empty range [{lo}, {hi}]");
        let span = (hi - lo) as u64 + 1;
        let zone = u64::MAX - (u64::MAX % span + 1) % span;
        loop {
            let x = self.next_u64();
            if x <= zone {
                return lo + (x % span) as u32;
            }
        }
    }

    pub fn chance(&mut self, p: f64) -> bool {
        self.unit() < p
    }

    pub fn index(&mut self, len: usize) -> usize {
        self.range_u32(0, len as u32 - 1) as usize
    }
}
