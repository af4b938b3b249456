//! Seeded random streams.
//!
//! [`Rng`] wraps ChaCha8, whose output is fixed by the seed on every
//! platform. Continuous samplers (normal, gamma, beta) are implemented here on
//! top of the raw uniform stream so results do not depend on library
//! versions of distribution code.

use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct Rng {
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Independent stream `stream` under the same seed. Used to give each
    /// consumer (shuffles, mixing coefficients, initialisation) its own
    /// sequence so that changing one does not shift the others.
    pub fn stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { inner }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[low, high)`.
    pub fn uniform_range(&mut self, low: f64, high: f64) -> f64 {
        low + (high - low) * self.uniform()
    }

    /// Uniform integer in `[0, n)`. `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.gen_range(0..n)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    /// Fresh uniform permutation of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        self.shuffle(&mut p);
        p
    }

    /// Standard normal via the Marsaglia polar method.
    pub fn normal(&mut self) -> f64 {
        loop {
            let u = 2.0 * self.uniform() - 1.0;
            let v = 2.0 * self.uniform() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                return u * (-2.0 * s.ln() / s).sqrt();
            }
        }
    }

    /// Gamma(shape, 1) by Marsaglia–Tsang, boosted for `shape < 1`.
    pub fn gamma(&mut self, shape: f64) -> Result<f64> {
        if shape <= 0.0 || !shape.is_finite() {
            return Err(Error::Domain(format!("gamma shape must be > 0, got {shape}")));
        }
        if shape < 1.0 {
            let g = self.gamma(shape + 1.0)?;
            let u = loop {
                let u = self.uniform();
                if u > 0.0 {
                    break u;
                }
            };
            return Ok(g * u.powf(1.0 / shape));
        }
        let d = shape - 1.0 / 3.0;
        let c = 1.0 / (9.0 * d).sqrt();
        loop {
            let x = self.normal();
            let v = 1.0 + c * x;
            if v <= 0.0 {
                continue;
            }
            let v = v * v * v;
            let u = self.uniform();
            if u < 1.0 - 0.0331 * x * x * x * x {
                return Ok(d * v);
            }
            if u > 0.0 && u.ln() < 0.5 * x * x + d * (1.0 - v + v.ln()) {
                return Ok(d * v);
            }
        }
    }

    /// Symmetric Beta(alpha, alpha) as a ratio of two gamma draws.
    pub fn beta(&mut self, alpha: f64) -> Result<f64> {
        if alpha <= 0.0 || !alpha.is_finite() {
            return Err(Error::Domain(format!("beta concentration must be > 0, got {alpha}")));
        }
        self.beta2(alpha, alpha)
    }

    /// General Beta(a, b).
    pub fn beta2(&mut self, a: f64, b: f64) -> Result<f64> {
        if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
            return Err(Error::Domain(format!("beta parameters must be > 0, got ({a}, {b})")));
        }
        loop {
            let x = self.gamma(a)?;
            let y = self.gamma(b)?;
            if x + y > 0.0 {
                return Ok(x / (x + y));
            }
        }
    }
}

/// Free-function form used by the mixing code.
pub fn sample_beta(rng: &mut Rng, alpha: f64) -> Result<f64> {
    rng.beta(alpha)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn moments(alpha: f64, n: usize, seed: u64) -> (f64, f64) {
        let mut rng = Rng::new(seed);
        let xs: Vec<f64> = (0..n).map(|_| rng.beta(alpha).unwrap()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        (mean, var)
    }

    #[test]
    fn beta_one_is_uniform() {
        let (mean, var) = moments(1.0, 100_000, 11);
        assert!((mean - 0.5).abs() < 0.01, "mean {mean}");
        assert!((var - 1.0 / 12.0).abs() < 0.005, "var {var}");
    }

    #[test]
    fn beta_four_variance() {
        // Var Beta(a, a) = 1 / (4 (2a + 1))
        let (_, var) = moments(4.0, 100_000, 12);
        assert!((var - 1.0 / 36.0).abs() < 0.005, "var {var}");
    }

    #[test]
    fn beta_rejects_non_positive() {
        let mut rng = Rng::new(0);
        assert!(matches!(rng.beta(0.0), Err(Error::Domain(_))));
        assert!(matches!(rng.beta(-1.0), Err(Error::Domain(_))));
        assert!(rng.beta(f64::NAN).is_err());
    }

    #[test]
    fn same_seed_same_stream() {
        let mut a = Rng::new(99);
        let mut b = Rng::new(99);
        for _ in 0..100 {
            assert_eq!(a.beta(0.5).unwrap().to_bits(), b.beta(0.5).unwrap().to_bits());
        }
    }

    #[test]
    fn streams_are_distinct() {
        let mut a = Rng::stream(5, 0);
        let mut b = Rng::stream(5, 1);
        let xa: Vec<u64> = (0..4).map(|_| a.next_u64()).collect();
        let xb: Vec<u64> = (0..4).map(|_| b.next_u64()).collect();
        assert_ne!(xa, xb);
    }

    #[test]
    fn permutation_is_a_permutation() {
        let mut rng = Rng::new(3);
        let mut p = rng.permutation(50);
        p.sort_unstable();
        assert_eq!(p, (0..50).collect::<Vec<_>>());
    }
}
