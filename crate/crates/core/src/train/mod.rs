//! Optimisation: cross-entropy training with Adam, a step learning-rate
//! schedule, gradient clipping, checkpoint persistence and the epoch loop.

mod adam;
mod checkpoint;
mod fit;

pub use adam::{adam_step, adam_update, clip_grad_norm, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use checkpoint::{import_weights, load_checkpoint, save_checkpoint, ImportReport, Manifest, BLOB_FILE, FORMAT_VERSION, MANIFEST_FILE};
pub use fit::{evaluate, fit, EpochRecord, Evaluation, History, Trainer, TrainState, BEST_DIR, HISTORY_FILE, LAST_DIR};

use serde::{Deserialize, Serialize};

use crate::data::AugmentConfig;
use crate::error::{Error, Result};

/// Optimisation hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr0: f64,
    /// Multiplier applied every `decay_every` epochs.
    pub decay_factor: f64,
    pub decay_every: usize,
    /// Decoupled decay, applied to conv/linear weights only.
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Classifier dropout used while training (overrides the model's).
    pub dropout: f64,
    /// Global gradient-norm ceiling; `None` disables clipping.
    pub grad_clip: Option<f64>,
    /// Augmentation of training samples; `None` disables it.
    pub augment: Option<AugmentConfig>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr0: 1e-3,
            decay_factor: 0.85,
            decay_every: 20,
            weight_decay: 0.04,
            batch_size: 16,
            epochs: 20,
            seed: 0,
            dropout: 0.3,
            grad_clip: Some(5.0),
            augment: Some(AugmentConfig::default()),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr0 > 0.0
            && self.decay_factor > 0.0
            && self.decay_factor <= 1.0
            && self.decay_every >= 1
            && self.weight_decay >= 0.0
            && self.batch_size >= 1
            && (0.0..1.0).contains(&self.dropout)
            && self.grad_clip.is_none_or(|c| c > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid training config: {self:?}")))
        }
    }
}

/// `lr0 · decay_factor^⌊epoch / decay_every⌋` for a zero-based epoch.
pub fn lr_at(epoch: usize, cfg: &TrainConfig) -> f64 {
    cfg.lr0 * cfg.decay_factor.powi((epoch / cfg.decay_every) as i32)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_steps_every_twenty_epochs() {
        let cfg = TrainConfig::default();
        for e in 0..20 {
            assert_eq!(lr_at(e, &cfg), 1e-3);
        }
        assert!((lr_at(20, &cfg) - 8.5e-4).abs() < 1e-15);
        assert!((lr_at(40, &cfg) - 7.225e-4).abs() < 1e-15);
        assert!((1..200).all(|e| lr_at(e, &cfg) <= lr_at(e - 1, &cfg)));
    }

    #[test]
    fn validation() {
        TrainConfig::default().validate().unwrap();
        for bad in [
            TrainConfig { lr0: 0.0, ..Default::default() },
            TrainConfig { decay_factor: 1.5, ..Default::default() },
            TrainConfig { batch_size: 0, ..Default::default() },
        ] {
            assert!(bad.validate().is_err());
        }
    }
}
