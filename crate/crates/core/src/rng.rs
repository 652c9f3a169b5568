//! Counter-based normal streams.
//!
//! Every trajectory owns the ChaCha8 stream `trajectory` under the master
//! seed. Step `k` reads exactly one 64-byte block (block index `k`), which
//! Box–Muller turns into eight standard normals. Any step can therefore be
//! regenerated without replaying its predecessors, and results do not depend
//! on how trajectories are scheduled across threads.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const NORMALS_PER_STEP: usize = 8;

#[derive(Clone, Debug)]
pub struct NoiseStream {
    rng: ChaCha8Rng,
    step: u64,
}

impl NoiseStream {
    pub fn new(master_seed: u64, trajectory: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(trajectory);
        NoiseStream { rng, step: 0 }
    }

    /// Index of the next block to be consumed.
    pub fn position(&self) -> u64 {
        self.step
    }

    pub fn seek(&mut self, step: u64) {
        self.step = step;
        self.rng.set_word_pos(step as u128 * 16);
    }

    /// Normals of step `k` without moving the cursor.
    pub fn normals_at(&self, step: u64) -> [f64; NORMALS_PER_STEP] {
        let mut other = self.clone();
        other.seek(step);
        other.next_normals()
    }

    /// Eight independent N(0,1) variates from the next block.
    pub fn next_normals(&mut self) -> [f64; NORMALS_PER_STEP] {
        self.rng.set_word_pos(self.step as u128 * 16);
        let mut words = [0u64; 8];
        for w in words.iter_mut() {
            *w = self.rng.next_u64();
        }
        self.step += 1;
        let mut out = [0.0; NORMALS_PER_STEP];
        for k in 0..4 {
            // (0,1] and [0,1) uniforms from the top 53 bits
            let u1 = ((words[2 * k] >> 11) as f64 + 1.0) * (1.0 / (1u64 << 53) as f64);
            let u2 = (words[2 * k + 1] >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
            let rad = (-2.0 * u1.ln()).sqrt();
            let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
            out[2 * k] = rad * c;
            out[2 * k + 1] = rad * s;
        }
        out
    }
}
