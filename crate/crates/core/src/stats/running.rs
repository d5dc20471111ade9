use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_MOMENTUM: f64 = 0.9;

/// Exponential running mean and standard deviation of a unit's inputs.
///
/// Each update blends in the batch mean and the population (biased) standard deviation:
/// `mu = m * mu + (1 - m) * mean(x)`, `sigma = m * sigma + (1 - m) * std(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    pub mean: f64,
    pub std: f64,
    pub update_count: u64,
    pub momentum: f64,
}

impl Default for RunningStats {
    fn default() -> Self {
        Self {
            mean: 0.0,
            std: 1.0,
            update_count: 0,
            momentum: DEFAULT_MOMENTUM,
        }
    }
}

/// Mean and population standard deviation, in input order.
pub fn batch_moments(batch: &[f64]) -> Result<(f64, f64)> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let n = batch.len() as f64;
    let mean = batch.iter().sum::<f64>() / n;
    let var = batch.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok((mean, var.sqrt()))
}

impl RunningStats {
    pub fn with_momentum(momentum: f64) -> Self {
        Self {
            momentum,
            ..Self::default()
        }
    }

    pub fn update(&mut self, batch: &[f64]) -> Result<()> {
        let (mean, std) = batch_moments(batch)?;
        self.update_moments(mean, std);
        Ok(())
    }

    pub fn update_moments(&mut self, batch_mean: f64, batch_std: f64) {
        let m = self.momentum;
        self.mean = self.mean * m + batch_mean * (1.0 - m);
        self.std = (self.std * m + batch_std * (1.0 - m)).max(0.0);
        self.update_count += 1;
    }
}

/// Functional form of [`RunningStats::update`].
pub fn update_stats(stats: &RunningStats, batch: &[f64]) -> Result<RunningStats> {
    let mut next = stats.clone();
    next.update(batch)?;
    Ok(next)
}
