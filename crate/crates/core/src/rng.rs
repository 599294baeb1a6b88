//! Seeded randomness with a fixed, documented derivation.
//!
//! The raw stream is ChaCha8 seeded through `SeedableRng::seed_from_u64`
//! (value-stable across `rand_chacha` releases). Everything built on top of
//! it is defined here rather than delegated to `rand`, so the exact sequence
//! of draws can be reproduced by another implementation:
//!
//! * `below(n)`  = `(next_u64() as u128 * n as u128) >> 64`
//! * `unit()`    = `(next_u64() >> 11) as f64 * 2^-53`, in `[0, 1)`
//! * `shuffle`   = Fisher-Yates from the last index down, swapping `i` with `below(i + 1)`
//! * `derive(seed, tag)` = first `next_u64()` of the stream seeded with `seed ^ (tag * 0x9E3779B97F4A7C15)`

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

pub struct DetRng {
    inner: ChaCha8Rng,
}

impl DetRng {
    pub fn new(seed: u64) -> Self {
        DetRng {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform integer in `[0, n)`. `n` must be nonzero.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    pub fn chance(&mut self, p: f64) -> bool {
        self.unit() < p
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        self.shuffle(&mut idx);
        idx
    }

    pub fn pick<'a, T>(&mut self, items: &'a [T]) -> &'a T {
        &items[self.below(items.len())]
    }
}

/// Derives an independent sub-seed from `seed` for a numbered purpose.
pub fn derive(seed: u64, tag: u64) -> u64 {
    DetRng::new(seed ^ tag.wrapping_mul(GOLDEN)).next_u64()
}
