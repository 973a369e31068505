//! The single random source used everywhere in the crate.
//!
//! The generator is xoshiro256++ (Blackman and Vigna) with its 256-bit state
//! filled from the 64-bit seed by SplitMix64 (increment `0x9E3779B97F4A7C15`,
//! mixing multipliers `0xBF58476D1CE4E5B9` and `0x94D049BB133111EB`). Derived
//! draws are defined on top of `next_u64` so any port can reproduce them:
//!
//! * `uniform`: `(next_u64 >> 11) * 2^-53`, in `[0, 1)`.
//! * `below(n)`: Lemire's multiply-shift with rejection, unbiased in `[0, n)`.
//! * `gaussian`: basic Box-Muller, `sqrt(-2 ln(1 - a)) * cos(2 pi b)` from two
//!   consecutive uniforms `a`, `b`; one normal per call, nothing cached.

use rand_xoshiro::rand_core::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

#[derive(Debug, Clone)]
pub struct PinnedRng {
    inner: Xoshiro256PlusPlus,
}

impl PinnedRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: Xoshiro256PlusPlus::seed_from_u64(seed),
        }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, n)`. `n` must be positive.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "empty range");
        let mut m = (self.next_u64() as u128) * (n as u128);
        let mut low = m as u64;
        if low < n {
            let threshold = n.wrapping_neg() % n;
            while low < threshold {
                m = (self.next_u64() as u128) * (n as u128);
                low = m as u64;
            }
        }
        (m >> 64) as u64
    }

    pub fn gaussian(&mut self) -> f64 {
        let a = self.uniform();
        let b = self.uniform();
        (-2.0 * (1.0 - a).ln()).sqrt() * (std::f64::consts::TAU * b).cos()
    }
}

/// SplitMix64 finalizer; used to derive independent per-cell seeds.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Fold a sequence of identifiers into a base seed.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(mix64(base), |acc, &p| mix64(acc ^ p))
}
