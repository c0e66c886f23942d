//! Deterministic random streams.
//!
//! All randomness flows from the configured 64-bit seed. Each subsystem draws
//! from its own ChaCha stream so adding draws in one place never perturbs
//! another.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::math::Vec3;

/// Independent stream identifiers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Imu = 1,
    Vision = 2,
    Depth = 3,
    Scenario = 4,
    Test = 99,
}

#[derive(Clone, Debug)]
pub struct SimRng {
    inner: ChaCha8Rng,
}

impl SimRng {
    pub fn new(seed: u64, stream: Stream) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream as u64);
        Self { inner }
    }

    /// Standard normal draw.
    pub fn gaussian(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Zero-mean normal with standard deviation `sigma`.
    pub fn normal(&mut self, sigma: f64) -> f64 {
        sigma * self.gaussian()
    }

    pub fn normal3(&mut self, sigma: f64) -> Vec3 {
        let x = self.normal(sigma);
        let y = self.normal(sigma);
        let z = self.normal(sigma);
        Vec3::new(x, y, z)
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.inner.random::<f64>()
    }

    pub fn below(&mut self, n: u64) -> u64 {
        self.inner.random_range(0..n)
    }
}
