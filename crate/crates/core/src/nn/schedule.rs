use serde::{Deserialize, Serialize};

use super::AdamConfig;

/// Optimization settings shared by autoencoder and classifier training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub initial_lr: f64,
    pub decay_factor: f64,
    /// Epochs between learning-rate decays.
    pub decay_every: usize,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            initial_lr: 1e-2,
            decay_factor: 0.1,
            decay_every: 15,
            max_epochs: 45,
            batch_size: 128,
            seed: 0,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Step schedule: `initial_lr * decay_factor^⌊epoch / decay_every⌋`.
    pub fn lr_at_epoch(&self, epoch: usize) -> f64 {
        let decays = epoch / self.decay_every.max(1);
        self.initial_lr * self.decay_factor.powi(decays as i32)
    }
}
