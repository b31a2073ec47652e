//! Reproducible randomness.
//!
//! All randomness in a run flows from a single 64-bit master seed.
//! Per-frame seeds are split off with SplitMix64, each frame then drives
//! its own ChaCha12 stream. Gaussian variates use Box-Muller on top of
//! 53-bit uniforms, so a (seed, draw-order) pair pins every sample
//! bit-exactly across platforms and crate versions.

use rand_chacha::ChaCha12Rng;
use rand_core::{RngCore, SeedableRng};

/// SplitMix64 step; the standard finalizer constants.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Seed for frame `frame_index` under `master_seed`.
pub fn frame_seed(master_seed: u64, frame_index: u64) -> u64 {
    let mut s = master_seed ^ 0x243f6a8885a308d3;
    let a = splitmix64(&mut s);
    let mut t = a ^ frame_index.wrapping_mul(0x9e3779b97f4a7c15);
    splitmix64(&mut t)
}

/// Per-frame random stream.
#[derive(Debug, Clone)]
pub struct FrameRng {
    inner: ChaCha12Rng,
    spare_normal: Option<f64>,
}

impl FrameRng {
    pub fn new(seed: u64) -> Self {
        FrameRng {
            inner: ChaCha12Rng::seed_from_u64(seed),
            spare_normal: None,
        }
    }

    /// Uniform in [0, 1) with 53 bits.
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform index in 0..m for power-of-two m (rejection-free mask).
    pub fn symbol_index(&mut self, m: usize) -> usize {
        debug_assert!(m.is_power_of_two());
        (self.inner.next_u64() & (m as u64 - 1)) as usize
    }

    /// Standard normal via Box-Muller; draws two uniforms per pair.
    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        // u1 in (0, 1] so the log is finite
        let u1 = ((self.inner.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(r * theta.sin());
        r * theta.cos()
    }
}
