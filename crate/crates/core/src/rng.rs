//! Deterministic pseudo-random generator used by every sampling and
//! initialization path in the pipeline.
//!
//! The algorithm is pinned so that manifests, weights, and scores are
//! reproducible across implementations and platforms:
//!
//! * state: xoshiro256** (Blackman/Vigna), 256 bits;
//! * seeding: four consecutive outputs of splitmix64 run on the 64-bit seed;
//! * `next_f64`: upper 53 bits of `next_u64`, scaled by 2^-53, giving a
//!   uniform draw in `[0, 1)`;
//! * bounded integers: modulo rejection sampling (unbiased);
//! * normals: Box-Muller on two fresh uniforms, cosine branch only.

use alloc::vec::Vec;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// One splitmix64 step: advances `state` and returns the mixed output.
#[inline]
fn splitmix64_next(state: &mut u64) -> u64 {
    *state = state.wrapping_add(GOLDEN_GAMMA);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent stream seed for item `index` under a base seed.
///
/// Defined as one splitmix64 output on state `seed ^ index`, so per-item
/// work can run in any order (or in parallel) and still reproduce the
/// sequential result.
pub fn derive_subseed(seed: u64, index: u64) -> u64 {
    let mut state = seed ^ index;
    splitmix64_next(&mut state)
}

/// Seeded xoshiro256** generator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rng {
    state: [u64; 4],
}

impl Rng {
    /// Creates a generator from a 64-bit seed via splitmix64 expansion.
    pub fn from_seed(seed: u64) -> Self {
        let mut sm = seed;
        let state = [
            splitmix64_next(&mut sm),
            splitmix64_next(&mut sm),
            splitmix64_next(&mut sm),
            splitmix64_next(&mut sm),
        ];
        Rng { state }
    }

    /// Next raw 64-bit output.
    pub fn next_u64(&mut self) -> u64 {
        let s = &mut self.state;
        let result = s[1].wrapping_mul(5).rotate_left(7).wrapping_mul(9);
        let t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = s[3].rotate_left(45);
        result
    }

    /// Uniform draw in `[0, 1)` from the top 53 bits of one `next_u64`.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Unbiased uniform integer in `[0, bound)` via modulo rejection.
    ///
    /// Panics if `bound` is zero.
    pub fn below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "rng bound must be positive");
        let threshold = bound.wrapping_neg() % bound;
        loop {
            let r = self.next_u64();
            if r >= threshold {
                return r % bound;
            }
        }
    }

    /// Uniform index in `[0, len)`.
    pub fn index(&mut self, len: usize) -> usize {
        self.below(len as u64) as usize
    }

    /// Standard normal draw (Box-Muller, cosine branch).
    ///
    /// The first uniform is shifted into `(0, 1]` so the logarithm is always
    /// finite.
    pub fn next_normal(&mut self) -> f64 {
        let u1 = ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
        let u2 = self.next_f64();
        libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(2.0 * core::f64::consts::PI * u2)
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.index(i + 1);
            items.swap(i, j);
        }
    }

    /// Draws `count` distinct elements from `pool` uniformly without
    /// replacement, in random order (partial Fisher-Yates).
    ///
    /// Panics if `count > pool.len()`; callers check the pool size first.
    pub fn sample_without_replacement<T: Clone>(&mut self, pool: &[T], count: usize) -> Vec<T> {
        assert!(count <= pool.len(), "sample larger than pool");
        let mut scratch: Vec<T> = pool.to_vec();
        for i in 0..count {
            let j = i + self.index(scratch.len() - i);
            scratch.swap(i, j);
        }
        scratch.truncate(count);
        scratch
    }
}
