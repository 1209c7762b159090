//! Seeded Wiener increments, one independent stream per detection channel.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Seed of trajectory `index` in an ensemble rooted at `seed`.
pub fn trajectory_seed(seed: u64, index: u64) -> u64 {
    seed ^ index
}

#[derive(Clone, Debug)]
pub struct NoiseSource {
    streams: Vec<ChaCha8Rng>,
    sqrt_dt: f64,
}

impl NoiseSource {
    pub fn new(seed: u64, channels: usize, dt: f64) -> Self {
        let streams = (0..channels)
            .map(|j| {
                let mut r = ChaCha8Rng::seed_from_u64(seed);
                r.set_stream(j as u64);
                r
            })
            .collect();
        Self { streams, sqrt_dt: dt.sqrt() }
    }

    pub fn channels(&self) -> usize {
        self.streams.len()
    }

    /// Fills one increment per channel, each `Normal(0, dt)`.
    pub fn fill(&mut self, out: &mut [f64]) {
        for (r, o) in self.streams.iter_mut().zip(out.iter_mut()) {
            let z: f64 = StandardNormal.sample(r);
            *o = self.sqrt_dt * z;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let mut a = NoiseSource::new(7, 2, 1e-2);
        let mut b = NoiseSource::new(7, 2, 1e-2);
        let (mut x, mut y) = ([0.0; 2], [0.0; 2]);
        for _ in 0..100 {
            a.fill(&mut x);
            b.fill(&mut y);
            assert_eq!(x, y);
            assert_ne!(x[0], x[1]);
        }
    }

    #[test]
    fn increment_moments() {
        let dt = 1e-3;
        let mut s = NoiseSource::new(11, 1, dt);
        let n = 200_000;
        let (mut m, mut v) = (0.0, 0.0);
        let mut x = [0.0];
        for _ in 0..n {
            s.fill(&mut x);
            m += x[0];
            v += x[0] * x[0];
        }
        m /= n as f64;
        v /= n as f64;
        // standard errors: sqrt(dt/n) for the mean, dt sqrt(2/n) for the variance
        assert!(m.abs() < 4.0 * (dt / n as f64).sqrt());
        assert!((v - dt).abs() < 4.0 * dt * (2.0 / n as f64).sqrt());
    }
}
