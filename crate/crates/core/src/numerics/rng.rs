//! xoshiro256** seeded through SplitMix64.
//!
//! The stream is fully specified so other implementations can reproduce it:
//!
//! * state: four `u64` words filled by four successive SplitMix64 outputs
//!   starting from the seed;
//! * `next_u64`: xoshiro256** (`rotl(s1 * 5, 7) * 9`, then the standard
//!   state update);
//! * `next_f64`: `(next_u64 >> 11) * 2^-53`, uniform on `[0, 1)`;
//! * `normal`: Box–Muller on `u1 = 1 - next_f64()`, `u2 = next_f64()`,
//!   yielding `r cos(2πu2)` first and caching `r sin(2πu2)` for the next call.

use rand_xoshiro::rand_core::{Rng as _, SeedableRng};
use rand_xoshiro::{SplitMix64, Xoshiro256StarStar};

const SPLITMIX_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone, PartialEq)]
pub struct Rng {
    seed: u64,
    core: Xoshiro256StarStar,
    spare_normal: Option<f64>,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            core: Xoshiro256StarStar::seed_from_u64(seed),
            spare_normal: None,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent generator for sub-stream `stream`, derived from the seed only.
    pub fn derive(&self, stream: u64) -> Rng {
        let mixed = self.seed ^ stream.wrapping_mul(SPLITMIX_GAMMA).rotate_left(17);
        Rng::new(SplitMix64::seed_from_u64(mixed).next_u64())
    }

    pub fn next_u64(&mut self) -> u64 {
        self.core.next_u64()
    }

    /// Uniform on `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in `[0, n)` by multiply-shift.
    pub fn below(&mut self, n: usize) -> usize {
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(r * theta.sin());
        r * theta.cos()
    }

    /// Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}
