use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_WARMUP_FRACTION: f64 = 0.05;

/// One-cycle cosine: linear warmup to `base_lr`, then cosine decay towards 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrCurve {
    pub warmup_fraction: f64,
}

impl Default for LrCurve {
    fn default() -> Self {
        Self {
            warmup_fraction: DEFAULT_WARMUP_FRACTION,
        }
    }
}

impl LrCurve {
    pub fn warmup_iterations(&self, total: usize) -> usize {
        ((self.warmup_fraction * total as f64).ceil() as usize).min(total)
    }

    pub fn lr(&self, base_lr: f64, t: usize, total: usize) -> f64 {
        let warm = self.warmup_iterations(total);
        if t < warm {
            return base_lr * (t + 1) as f64 / warm as f64;
        }
        let span = (total - warm).max(1) as f64;
        let progress = ((t - warm) as f64 / span).min(1.0);
        0.5 * base_lr * (1.0 + (PI * progress).cos())
    }
}

/// Iteration budget and optimizer settings for one training run.
///
/// `realign_iteration == 0` disables realignment: PWLU units train from their initial
/// boundaries from the first step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSchedule {
    pub total_iterations: usize,
    pub realign_iteration: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub pwlu_lr_multiplier: f64,
    pub lr_curve: LrCurve,
    pub seed: u64,
}

impl TrainSchedule {
    /// Converts epoch counts to iterations for a training set of `n_train` samples.
    pub fn from_epochs(
        epochs: usize,
        realign_epochs: usize,
        n_train: usize,
        batch_size: usize,
        base_lr: f64,
        seed: u64,
    ) -> Self {
        let per_epoch = iterations_per_epoch(n_train, batch_size);
        Self {
            total_iterations: epochs * per_epoch,
            realign_iteration: realign_epochs * per_epoch,
            batch_size,
            base_lr,
            momentum: 0.9,
            weight_decay: 1e-4,
            pwlu_lr_multiplier: 1.0,
            lr_curve: LrCurve::default(),
            seed,
        }
    }

    pub fn realign_enabled(&self) -> bool {
        self.realign_iteration > 0
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Schedule("batch size must be positive".into()));
        }
        if self.realign_enabled() && self.realign_iteration >= self.total_iterations {
            return Err(Error::Schedule(format!(
                "realign iteration {} must be below total iterations {}",
                self.realign_iteration, self.total_iterations
            )));
        }
        for (name, v) in [
            ("base_lr", self.base_lr),
            ("momentum", self.momentum),
            ("weight_decay", self.weight_decay),
            ("pwlu_lr_multiplier", self.pwlu_lr_multiplier),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Schedule(format!(
                    "{name} must be finite and non-negative"
                )));
            }
        }
        if !(0.0..1.0).contains(&self.lr_curve.warmup_fraction) {
            return Err(Error::Schedule("warmup fraction must be in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn lr(&self, t: usize) -> f64 {
        self.lr_curve.lr(self.base_lr, t, self.total_iterations)
    }
}

pub fn iterations_per_epoch(n_train: usize, batch_size: usize) -> usize {
    n_train.div_ceil(batch_size.max(1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curve_shape() {
        let c = LrCurve::default();
        let total = 200;
        assert_eq!(c.warmup_iterations(total), 10);
        assert!((c.lr(1.0, 0, total) - 0.1).abs() < 1e-15);
        assert_eq!(c.lr(1.0, 9, total), 1.0);
        assert_eq!(c.lr(1.0, 10, total), 1.0);
        assert!((c.lr(1.0, 105, total) - 0.5).abs() < 1e-12);
        assert!(c.lr(1.0, 199, total) < 1e-3);
        for t in 10..199 {
            assert!(c.lr(1.0, t + 1, total) <= c.lr(1.0, t, total));
        }
    }

    #[test]
    fn epoch_conversion() {
        let s = TrainSchedule::from_epochs(20, 5, 1000, 64, 0.1, 0);
        assert_eq!(s.total_iterations, 20 * 16);
        assert_eq!(s.realign_iteration, 5 * 16);
        s.validate().unwrap();
    }

    #[test]
    fn rejects_late_realign() {
        let s = TrainSchedule::from_epochs(5, 5, 100, 10, 0.1, 0);
        assert!(s.validate().is_err());
        let s = TrainSchedule::from_epochs(5, 0, 100, 10, 0.1, 0);
        assert!(s.validate().is_ok());
    }
}
