use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Discrete Ornstein-Uhlenbeck process with zero mean.
#[derive(Debug, Clone, PartialEq)]
pub struct OuNoise {
    pub xi: f64,
    pub varsigma: f64,
    pub state: Vec<f64>,
}

impl OuNoise {
    pub fn new(dim: usize, xi: f64, varsigma: f64) -> Result<Self> {
        if !(xi > 0.0 && xi <= 1.0) {
            return Err(Error::Config(format!("OU reversion rate must lie in (0, 1], got {xi}")));
        }
        if !(varsigma >= 0.0 && varsigma.is_finite()) {
            return Err(Error::Config(format!("OU scale must be non-negative, got {varsigma}")));
        }
        Ok(Self { xi, varsigma, state: vec![0.0; dim] })
    }

    pub fn reset(&mut self) {
        self.state.iter_mut().for_each(|z| *z = 0.0);
    }

    /// Advances the process one step and returns the new state.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> &[f64] {
        for z in &mut self.state {
            let n: f64 = rng.sample(StandardNormal);
            *z += -self.xi * *z + self.varsigma * n;
        }
        &self.state
    }

    /// Stationary per-component variance `ς² / (1 − (1 − ξ)²)`.
    pub fn stationary_variance(&self) -> f64 {
        let r = 1.0 - self.xi;
        self.varsigma * self.varsigma / (1.0 - r * r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn deterministic_limits() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut full = OuNoise::new(2, 1.0, 0.0).unwrap();
        full.state = vec![3.0, -1.0];
        assert_eq!(full.step(&mut rng), &[0.0, 0.0]);

        let mut decay = OuNoise::new(1, 0.15, 0.0).unwrap();
        decay.state = vec![1.0];
        assert!((decay.step(&mut rng)[0] - 0.85).abs() < 1e-15);
    }

    #[test]
    fn invalid_parameters() {
        assert!(OuNoise::new(1, 0.0, 0.1).is_err());
        assert!(OuNoise::new(1, 1.5, 0.1).is_err());
        assert!(OuNoise::new(1, 0.5, -0.1).is_err());
    }
}
