//! Seeded random streams for scenario generation.
//!
//! Every stream is a ChaCha8 generator keyed by `ChaCha8Rng::seed_from_u64(seed)`
//! with the ChaCha stream id selecting the purpose:
//!
//! | stream id | purpose                           | seed            |
//! |-----------|-----------------------------------|-----------------|
//! | 0         | line lengths (topology)           | `topology_seed` |
//! | 1         | loads, then PV placement shuffle  | `load_seed`     |
//!
//! Draws are converted to floats by hand (rather than through `rand`'s
//! distribution types) so the mapping from seed to feeder is fixed by this
//! file alone and reproducible from any ChaCha8 implementation.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

pub const TOPOLOGY_STREAM: u64 = 0;
pub const LOAD_STREAM: u64 = 1;

const MANTISSA_BITS: u32 = 53;

#[derive(Debug, Clone)]
pub struct SeededStream {
    rng: ChaCha8Rng,
}

impl SeededStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { rng }
    }

    pub fn topology(seed: u64) -> Self {
        Self::new(seed, TOPOLOGY_STREAM)
    }

    pub fn loads(seed: u64) -> Self {
        Self::new(seed, LOAD_STREAM)
    }

    fn next_bits(&mut self) -> u64 {
        self.rng.next_u64() >> (64 - MANTISSA_BITS)
    }

    /// Uniform on the closed interval `[0, 1]`.
    pub fn unit_closed(&mut self) -> f64 {
        self.next_bits() as f64 / ((1u64 << MANTISSA_BITS) - 1) as f64
    }

    /// Uniform on the half-open interval `[0, 1)`.
    pub fn unit_open(&mut self) -> f64 {
        self.next_bits() as f64 / (1u64 << MANTISSA_BITS) as f64
    }

    /// Uniform on `[lo, hi]`, both ends reachable. Returns `lo` exactly when `lo == hi`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        let u = self.unit_closed();
        (lo + (hi - lo) * u).clamp(lo, hi)
    }

    /// Index uniform in `0..bound`; `bound` must be nonzero.
    pub fn index(&mut self, bound: usize) -> usize {
        debug_assert!(bound > 0);
        ((self.unit_open() * bound as f64) as usize).min(bound - 1)
    }

    /// In-place Fisher-Yates shuffle, walking from the back.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.index(i + 1);
            items.swap(i, j);
        }
    }
}
