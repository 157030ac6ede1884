//! Counter-addressed random streams.
//!
//! Every realization owns a ChaCha8 key derived from `(master seed, grid index,
//! realization index)`. Within a realization, the draws of step `k` start at a
//! fixed word offset `k << STEP_SHIFT` of the keystream, and coordinate `c` of
//! that step is the `c`-th normal drawn there. The random numbers used by a
//! step are thus a pure function of (seed, realization, step, coordinate),
//! independent of how realizations are scheduled across workers.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// log2 of the number of 32-bit keystream words reserved per step.
const STEP_SHIFT: u32 = 22;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of realization `realization` at grid point `grid_index`.
///
/// `mix64(mix64(mix64(master) ^ grid_index) ^ realization)`; this mapping is
/// part of the output format and must not change.
pub fn realization_seed(master: u64, grid_index: u64, realization: u64) -> u64 {
    mix64(mix64(mix64(master) ^ grid_index) ^ realization)
}

/// Normal variates addressed by step index.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    rng: ChaCha8Rng,
    step: u64,
    drawn: u64,
}

impl NoiseStream {
    pub fn new(seed: u64) -> NoiseStream {
        NoiseStream {
            rng: ChaCha8Rng::seed_from_u64(seed),
            step: 0,
            drawn: 0,
        }
    }

    /// Positions the stream at the first draw of `step`.
    pub fn begin_step(&mut self, step: u64) {
        self.rng.set_word_pos((step as u128) << STEP_SHIFT);
        self.step = step;
        self.drawn = 0;
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    #[inline]
    pub fn normal(&mut self) -> f64 {
        self.drawn += 1;
        let z: f64 = self.rng.sample(StandardNormal);
        debug_assert!(
            self.rng.get_word_pos() < ((self.step as u128 + 1) << STEP_SHIFT),
            "step {} overflowed its keystream block",
            self.step
        );
        z
    }

    pub fn uniform(&mut self) -> f64 {
        self.drawn += 1;
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Number of draws since the last `begin_step`.
    pub fn drawn(&self) -> u64 {
        self.drawn
    }
}
