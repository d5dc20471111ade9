use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{accumulate_element, ParamGrads, PwluParams};
use crate::nn::optim::Sgd;
use crate::stats::{
    percentile_interval, realign_reset, AlignmentRow, Interval, Reservoir, RunningStats,
};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Granularity {
    /// One unit shared by the whole layer.
    Layer,
    /// One unit per channel (axis 1 of the input).
    Channel,
}

impl Granularity {
    pub fn as_str(&self) -> &'static str {
        match self {
            Granularity::Layer => "layer",
            Granularity::Channel => "channel",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "layer" => Some(Granularity::Layer),
            "channel" => Some(Granularity::Channel),
            _ => None,
        }
    }
}

/// ReLU-shaped unit on `[-half_width, half_width]`; `n_intervals` must be even so that 0 is a
/// demarcation point.
pub fn init_pwlu_relu(n_intervals: usize, half_width: f64) -> Result<PwluParams> {
    if n_intervals == 0 || !n_intervals.is_multiple_of(2) {
        return Err(Error::DegenerateParams(format!(
            "ReLU initialization needs an even positive interval count, got {n_intervals}"
        )));
    }
    if !(half_width > 0.0) || !half_width.is_finite() {
        return Err(Error::DegenerateParams(format!(
            "half width {half_width} must be positive"
        )));
    }
    PwluParams::relu_on_grid(n_intervals, -half_width, half_width)
}

/// A bank of PWLU units with their input statistics and optimizer state.
#[derive(Debug, Clone)]
pub struct PwluLayer {
    pub granularity: Granularity,
    pub units: Vec<PwluParams>,
    pub stats: Vec<RunningStats>,
    pub reservoirs: Vec<Reservoir>,
    /// Optimizer steps leave the units untouched while set.
    pub frozen: bool,
    /// Forward passes in training mode feed the statistics while set.
    pub collecting: bool,
    pub grads: Vec<ParamGrads>,
    pub velocities: Vec<Vec<f64>>,
    input: Option<Tensor>,
}

impl PwluLayer {
    pub fn new(
        granularity: Granularity,
        channels: usize,
        init: PwluParams,
        reservoir_capacity: usize,
        reservoir_seed: u64,
    ) -> Self {
        let n_units = match granularity {
            Granularity::Layer => 1,
            Granularity::Channel => channels,
        };
        let reservoirs = (0..n_units)
            .map(|u| Reservoir::new(reservoir_capacity, reservoir_seed.wrapping_add(u as u64)))
            .collect();
        Self {
            granularity,
            grads: vec![ParamGrads::zeros_like(&init); n_units],
            velocities: vec![vec![0.0; init.trainable_len()]; n_units],
            stats: vec![RunningStats::default(); n_units],
            units: vec![init; n_units],
            reservoirs,
            frozen: false,
            collecting: false,
            input: None,
        }
    }

    /// `(channels, inner)` for an input of shape `[B, C, ...]`.
    fn layout(&self, x: &Tensor) -> Result<(usize, usize)> {
        let s = x.shape();
        if s.len() < 2 {
            return Err(Error::ShapeMismatch {
                expected: vec![0, self.units.len()],
                actual: s.to_vec(),
            });
        }
        let channels = s[1];
        if self.granularity == Granularity::Channel && channels != self.units.len() {
            return Err(Error::ShapeMismatch {
                expected: vec![s[0], self.units.len()],
                actual: s.to_vec(),
            });
        }
        Ok((channels, s[2..].iter().product()))
    }

    #[inline]
    fn unit_of(&self, i: usize, channels: usize, inner: usize) -> usize {
        match self.granularity {
            Granularity::Layer => 0,
            Granularity::Channel => (i / inner) % channels,
        }
    }

    /// Input values grouped by unit, in element order.
    pub fn split_by_unit(&self, x: &Tensor) -> Result<Vec<Vec<f64>>> {
        let (channels, inner) = self.layout(x)?;
        let mut buckets = vec![Vec::with_capacity(x.len() / self.units.len()); self.units.len()];
        for (i, &v) in x.data().iter().enumerate() {
            buckets[self.unit_of(i, channels, inner)].push(v);
        }
        Ok(buckets)
    }

    pub fn forward(&mut self, x: &Tensor, train: bool) -> Result<Tensor> {
        let (channels, inner) = self.layout(x)?;
        if train && self.collecting {
            let buckets = self.split_by_unit(x)?;
            for ((bucket, stats), reservoir) in buckets
                .iter()
                .zip(&mut self.stats)
                .zip(&mut self.reservoirs)
            {
                stats.update(bucket)?;
                reservoir.extend(bucket.iter().copied());
            }
        }
        let data = x
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| self.units[self.unit_of(i, channels, inner)].eval(v))
            .collect();
        let y = Tensor::new(x.shape().to_vec(), data)?;
        if train {
            self.input = Some(x.clone());
        }
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        let x = self
            .input
            .take()
            .ok_or_else(|| Error::Checkpoint("pwlu backward before forward".into()))?;
        x.ensure_same_shape(dy)?;
        let (channels, inner) = self.layout(&x)?;
        self.grads.iter_mut().for_each(ParamGrads::reset);
        let mut dx = Vec::with_capacity(x.len());
        for (i, (&xi, &gi)) in x.data().iter().zip(dy.data()).enumerate() {
            let u = self.unit_of(i, channels, inner);
            dx.push(accumulate_element(
                &self.units[u],
                xi,
                gi,
                &mut self.grads[u],
            ));
        }
        let dx = Tensor::new(x.shape().to_vec(), dx)?;
        self.input = Some(x);
        Ok(dx)
    }

    pub fn cached_input(&self) -> Option<&Tensor> {
        self.input.as_ref()
    }

    /// Applies one SGD step to every unit (no weight decay). No-op while frozen.
    pub fn sgd_step(&mut self, sgd: &Sgd, lr: f64) -> Result<()> {
        if self.frozen {
            return Ok(());
        }
        let mut params = Vec::new();
        let mut grads = Vec::new();
        for ((unit, g), vel) in self
            .units
            .iter_mut()
            .zip(&self.grads)
            .zip(&mut self.velocities)
        {
            params.clear();
            grads.clear();
            unit.write_trainable(&mut params);
            g.write_packed(&mut grads);
            sgd.step(&mut params, &grads, vel, lr, false);
            unit.read_trainable(&params)?;
        }
        Ok(())
    }

    /// Resets every unit from its running statistics and starts gradient training.
    pub fn realign(&mut self) -> Result<()> {
        for (unit, stats) in self.units.iter_mut().zip(&self.stats) {
            *unit = realign_reset(unit, stats)?;
        }
        for v in &mut self.velocities {
            v.iter_mut().for_each(|x| *x = 0.0);
        }
        self.frozen = false;
        self.collecting = false;
        Ok(())
    }

    /// Alignment rows against the given per-unit samples; units with too few samples are skipped.
    pub fn alignment_rows(&self, layer_name: &str, samples: &[&[f64]]) -> Vec<AlignmentRow> {
        self.units
            .iter()
            .zip(samples)
            .enumerate()
            .filter_map(|(u, (p, s))| {
                let input = percentile_interval(s).ok()?;
                Some(AlignmentRow::new(
                    layer_name,
                    u,
                    Interval::new(p.left_boundary, p.right_boundary),
                    input,
                ))
            })
            .collect()
    }

    /// Alignment of the current boundaries against the retained Phase I samples.
    pub fn reservoir_alignment(&self, layer_name: &str) -> Vec<AlignmentRow> {
        let samples: Vec<&[f64]> = self.reservoirs.iter().map(|r| r.samples()).collect();
        self.alignment_rows(layer_name, &samples)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_examples() {
        let p = init_pwlu_relu(4, 2.0).unwrap();
        assert_eq!(p.y_points, vec![0.0, 0.0, 0.0, 1.0, 2.0]);
        let p = init_pwlu_relu(16, 3.0).unwrap();
        assert_eq!(p.y_points.len(), 17);
        assert!(p.y_points[..9].iter().all(|&y| y == 0.0));
        assert!(p.y_points[9] > 0.0);
        assert!(init_pwlu_relu(5, 2.0).is_err());
        assert!(init_pwlu_relu(4, 0.0).is_err());
    }

    #[test]
    fn channel_units_see_their_own_channel() {
        let mut layer = PwluLayer::new(
            Granularity::Channel,
            2,
            init_pwlu_relu(4, 2.0).unwrap(),
            64,
            0,
        );
        layer.units[1].right_slope = 3.0;
        let x = Tensor::new(vec![2, 2], vec![5.0, 5.0, -1.0, 5.0]).unwrap();
        let y = layer.forward(&x, false).unwrap();
        assert_eq!(y.data(), &[5.0, 11.0, 0.0, 11.0]);
    }

    #[test]
    fn conv_layout_channel_split() {
        let layer = PwluLayer::new(
            Granularity::Channel,
            2,
            init_pwlu_relu(4, 2.0).unwrap(),
            64,
            0,
        );
        // [B=2, C=2, H=1, W=2]
        let x = Tensor::new(vec![2, 2, 1, 2], (0..8).map(f64::from).collect()).unwrap();
        let b = layer.split_by_unit(&x).unwrap();
        assert_eq!(b[0], vec![0.0, 1.0, 4.0, 5.0]);
        assert_eq!(b[1], vec![2.0, 3.0, 6.0, 7.0]);
    }

    #[test]
    fn frozen_layer_is_not_updated() {
        let mut layer = PwluLayer::new(
            Granularity::Layer,
            3,
            init_pwlu_relu(4, 2.0).unwrap(),
            64,
            0,
        );
        layer.frozen = true;
        let before = layer.units.clone();
        let x = Tensor::new(vec![2, 3], vec![0.5, -1.5, 1.7, 3.0, -3.0, 0.1]).unwrap();
        layer.forward(&x, true).unwrap();
        layer
            .backward(&Tensor::new(vec![2, 3], vec![1.0; 6]).unwrap())
            .unwrap();
        layer.sgd_step(&Sgd::new(0.9, 0.1), 10.0).unwrap();
        assert_eq!(layer.units, before);
        layer.frozen = false;
        layer.sgd_step(&Sgd::new(0.9, 0.1), 10.0).unwrap();
        assert_ne!(layer.units, before);
    }
}
