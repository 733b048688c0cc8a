use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::LabeledVector;
use crate::error::{Error, Result};

/// Feature-vector augmentation: additive Gaussian noise followed by random masking.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub noise_sigma: f64,
    pub mask_prob: f64,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            noise_sigma: 0.1,
            mask_prob: 0.1,
            seed: 0,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config(format!(
                "noise_sigma must be non-negative, got {}",
                self.noise_sigma
            )));
        }
        if !(0.0..1.0).contains(&self.mask_prob) {
            return Err(Error::Config(format!(
                "mask_prob must lie in [0, 1), got {}",
                self.mask_prob
            )));
        }
        Ok(())
    }
}

/// Stateful augmentation operator. Each call draws fresh randomness from the seeded generator.
#[derive(Debug, Clone)]
pub struct Augmenter {
    cfg: AugmentConfig,
    noise: Normal<f64>,
    rng: ChaCha8Rng,
}

impl Augmenter {
    pub fn new(cfg: AugmentConfig) -> Result<Self> {
        cfg.validate()?;
        let noise = Normal::new(0.0, cfg.noise_sigma)
            .map_err(|e| Error::Config(format!("noise_sigma: {e}")))?;
        Ok(Self {
            cfg,
            noise,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        })
    }

    pub fn config(&self) -> &AugmentConfig {
        &self.cfg
    }

    pub fn augment(&mut self, batch: &[LabeledVector]) -> Vec<LabeledVector> {
        batch.iter().map(|s| self.augment_one(s)).collect()
    }

    fn augment_one(&mut self, sample: &LabeledVector) -> LabeledVector {
        let features = sample
            .features
            .iter()
            .map(|&x| {
                let noisy = if self.cfg.noise_sigma > 0.0 {
                    x + self.noise.sample(&mut self.rng)
                } else {
                    x
                };
                if self.cfg.mask_prob > 0.0 && self.rng.random_bool(self.cfg.mask_prob) {
                    0.0
                } else {
                    noisy
                }
            })
            .collect();
        LabeledVector::new(features, sample.label)
    }
}
