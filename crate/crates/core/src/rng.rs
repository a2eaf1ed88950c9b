//! Reproducible randomness.
//!
//! Every randomized routine takes its randomness from an explicit handle.
//! [`SeededRng`] is a ChaCha20 stream keyed by `(seed, stream)`, so two handles
//! built from the same pair replay the same bits on every platform. Noise
//! draws go through the [`NoiseSource`] trait, which [`ZeroNoise`] also
//! implements: plugging it in turns every mechanism into the identity map.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// Source of the two primitive noise laws used by the mechanisms.
pub trait NoiseSource {
    /// One Laplace(0, 1) draw.
    fn standard_laplace(&mut self) -> f64;
    /// One N(0, 1) draw.
    fn standard_normal(&mut self) -> f64;

    fn laplace(&mut self, scale: f64) -> f64 {
        scale * self.standard_laplace()
    }

    fn gaussian(&mut self, sd: f64) -> f64 {
        sd * self.standard_normal()
    }
}

/// ChaCha20 generator addressed by a 64-bit seed and a stream id.
#[derive(Clone, Debug)]
pub struct SeededRng {
    inner: ChaCha20Rng,
    seed: u64,
    stream: u64,
    spare_normal: Option<f64>,
}

impl SeededRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha20Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self {
            inner,
            seed,
            stream,
            spare_normal: None,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Uniform draw on the open interval (0, 1) with 53 bits of resolution.
    pub fn uniform_open(&mut self) -> f64 {
        ((self.inner.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw on `[lo, hi)`.
    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform_open()
    }

    /// Bernoulli(p) draw.
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform_open() < p
    }

    /// Exponential(1) draw.
    pub fn standard_exponential(&mut self) -> f64 {
        -self.uniform_open().ln()
    }

    /// Uniformly distributed unit vector in `dim` dimensions.
    pub fn unit_vector(&mut self, dim: usize) -> Vec<f64> {
        loop {
            let v: Vec<f64> = (0..dim).map(|_| self.standard_normal()).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-300 {
                return v.into_iter().map(|x| x / norm).collect();
            }
        }
    }
}

impl RngCore for SeededRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

impl NoiseSource for SeededRng {
    /// Inverse-CDF transform of a uniform on (-1/2, 1/2).
    fn standard_laplace(&mut self) -> f64 {
        let u = self.uniform_open() - 0.5;
        -u.signum() * (1.0 - 2.0 * u.abs()).ln()
    }

    /// Box-Muller; the second variate of each pair is cached.
    fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = self.uniform_open();
        let u2 = self.uniform_open();
        let r = (-2.0 * u1.ln()).sqrt();
        let angle = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(r * angle.sin());
        r * angle.cos()
    }
}

/// Noise source that always returns zero.
#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroNoise;

impl NoiseSource for ZeroNoise {
    fn standard_laplace(&mut self) -> f64 {
        0.0
    }

    fn standard_normal(&mut self) -> f64 {
        0.0
    }
}
