//! Training hyper-parameters and the step learning-rate schedule.

use crate::error::{PipelineError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr0: f64,
    pub decay_factor: f64,
    /// The rate divides by `decay_factor` every this many epochs.
    pub decay_every: usize,
    pub val_fraction: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Apply flip/crop augmentation during training (on for the real
    /// pipeline; memorization checks turn it off).
    pub augment: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            lr0: 1e-4,
            decay_factor: 2.0,
            decay_every: 30,
            val_fraction: 0.1,
            batch_size: 4,
            seed: 42,
            augment: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lr0 <= 0.0 {
            return Err(PipelineError::Input("lr0 must be positive".into()));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(PipelineError::Input(
                "val_fraction must lie strictly between 0 and 1".into(),
            ));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.decay_every == 0 {
            return Err(PipelineError::Input(
                "epochs, batch_size and decay_every must be positive".into(),
            ));
        }
        if self.decay_factor < 1.0 {
            return Err(PipelineError::Input("decay_factor must be >= 1".into()));
        }
        Ok(())
    }
}

/// `lr0 / decay_factor^floor(epoch / decay_every)`.
pub fn lr_at(epoch: usize, config: &TrainConfig) -> f64 {
    config.lr0 / config.decay_factor.powi((epoch / config.decay_every) as i32)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_hits_the_documented_points() {
        let cfg = TrainConfig::default();
        assert_eq!(lr_at(0, &cfg), 1e-4);
        assert_eq!(lr_at(29, &cfg), 1e-4);
        assert_eq!(lr_at(30, &cfg), 5e-5);
        assert_eq!(lr_at(60, &cfg), 2.5e-5);
        assert_eq!(lr_at(90, &cfg), 1.25e-5);
    }

    #[test]
    fn schedule_is_non_increasing_and_halves_on_multiples() {
        let cfg = TrainConfig::default();
        for e in 1..200 {
            assert!(lr_at(e, &cfg) <= lr_at(e - 1, &cfg));
        }
        for k in 1..4 {
            assert_eq!(lr_at(30 * k, &cfg), lr_at(30 * k - 1, &cfg) / 2.0);
        }
    }

    #[test]
    fn validation_rejects_bad_fields() {
        let mut cfg = TrainConfig::default();
        cfg.val_fraction = 0.0;
        assert!(cfg.validate().is_err());
        cfg.val_fraction = 1.0;
        assert!(cfg.validate().is_err());
        cfg.val_fraction = 0.5;
        cfg.lr0 = 0.0;
        assert!(cfg.validate().is_err());
    }
}
