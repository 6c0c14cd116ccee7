//! Counter-based random phases.
//!
//! The phase `θ` of mode `i` at frequency line `k` in realization `r` is read
//! from a ChaCha8 stream seeded with the run seed, stream id `r`, at word
//! position `2·(k·n_components + i)`. Any realization, and any single phase,
//! can be regenerated without producing the ones before it, and the phases of
//! the leading modes do not depend on how many modes are simulated.

use core::f64::consts::TAU;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

#[derive(Debug, Clone)]
pub struct PhaseStream {
    seed: u64,
    n_components: usize,
}

impl PhaseStream {
    pub fn new(seed: u64, n_components: usize) -> Self {
        PhaseStream { seed, n_components }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn rng(&self, realization: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(realization);
        rng
    }

    /// Phase of one `(realization, mode, line)` triple, uniform on `[0, 2π)`.
    pub fn phase(&self, realization: u64, mode: usize, line: usize) -> f64 {
        let mut rng = self.rng(realization);
        rng.set_word_pos(2 * (line as u128 * self.n_components as u128 + mode as u128));
        to_phase(rng.next_u64())
    }

    /// Cursor that yields the phases of one realization line by line.
    pub fn realization(&self, realization: u64) -> RealizationPhases {
        RealizationPhases { rng: self.rng(realization), n_components: self.n_components }
    }
}

pub struct RealizationPhases {
    rng: ChaCha8Rng,
    n_components: usize,
}

impl RealizationPhases {
    /// Fills `out` with the phases of modes `0..out.len()` at `line`.
    pub fn line(&mut self, line: usize, out: &mut [f64]) {
        let pos = 2 * (line as u128 * self.n_components as u128);
        if self.rng.get_word_pos() != pos {
            self.rng.set_word_pos(pos);
        }
        for slot in out.iter_mut() {
            *slot = to_phase(self.rng.next_u64());
        }
    }
}

fn to_phase(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64) * TAU
}
