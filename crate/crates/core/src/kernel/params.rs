use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest admissible `right_boundary - left_boundary`.
pub const MIN_WIDTH: f64 = 1e-12;

/// Parameters of one piecewise linear unit.
///
/// `[left_boundary, right_boundary]` is split into `n_intervals` equal intervals whose
/// `n_intervals + 1` end points carry the heights in `y_points`. Outside the boundaries the
/// function continues with `left_slope` and `right_slope`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PwluParams {
    pub n_intervals: usize,
    pub left_boundary: f64,
    pub right_boundary: f64,
    pub y_points: Vec<f64>,
    pub left_slope: f64,
    pub right_slope: f64,
}

/// Where an input falls relative to the boundaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Left,
    Interior(usize),
    Right,
}

impl PwluParams {
    pub fn new(
        n_intervals: usize,
        left_boundary: f64,
        right_boundary: f64,
        y_points: Vec<f64>,
        left_slope: f64,
        right_slope: f64,
    ) -> Result<Self> {
        let params = Self {
            n_intervals,
            left_boundary,
            right_boundary,
            y_points,
            left_slope,
            right_slope,
        };
        params.validate()?;
        Ok(params)
    }

    /// ReLU sampled on the grid, with outer slopes 0 and 1.
    ///
    /// Reproduces `max(x, 0)` exactly when 0 is a grid point and the grid points are exactly
    /// representable (e.g. dyadic boundaries).
    pub fn relu_on_grid(
        n_intervals: usize,
        left_boundary: f64,
        right_boundary: f64,
    ) -> Result<Self> {
        if n_intervals == 0 {
            return Err(Error::DegenerateParams(
                "n_intervals must be positive".into(),
            ));
        }
        let mut params = Self {
            n_intervals,
            left_boundary,
            right_boundary,
            y_points: vec![0.0; n_intervals + 1],
            left_slope: 0.0,
            right_slope: 1.0,
        };
        params.validate_boundaries()?;
        params.resample_relu();
        Ok(params)
    }

    /// Sets every height to `max(B_j, 0)` and the outer slopes to 0 and 1.
    pub(crate) fn resample_relu(&mut self) {
        self.left_slope = 0.0;
        self.right_slope = 1.0;
        for j in 0..=self.n_intervals {
            self.y_points[j] = self.grid_point(j).max(0.0);
        }
    }

    fn validate_boundaries(&self) -> Result<()> {
        if !self.left_boundary.is_finite() || !self.right_boundary.is_finite() {
            return Err(Error::DegenerateParams("boundaries must be finite".into()));
        }
        let width = self.right_boundary - self.left_boundary;
        if !(width >= MIN_WIDTH) || !self.interval_len().is_finite() {
            return Err(Error::DegenerateParams(format!(
                "boundary width {width} below minimum {MIN_WIDTH}"
            )));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_intervals == 0 {
            return Err(Error::DegenerateParams(
                "n_intervals must be positive".into(),
            ));
        }
        if self.y_points.len() != self.n_intervals + 1 {
            return Err(Error::DegenerateParams(format!(
                "expected {} y-points, got {}",
                self.n_intervals + 1,
                self.y_points.len()
            )));
        }
        self.validate_boundaries()?;
        if !self.left_slope.is_finite()
            || !self.right_slope.is_finite()
            || self.y_points.iter().any(|y| !y.is_finite())
        {
            return Err(Error::DegenerateParams(
                "non-finite slope or y-point".into(),
            ));
        }
        Ok(())
    }

    pub fn interval_len(&self) -> f64 {
        (self.right_boundary - self.left_boundary) / self.n_intervals as f64
    }

    /// Demarcation point `B_L + j * d`.
    pub fn grid_point(&self, j: usize) -> f64 {
        self.left_boundary + j as f64 * self.interval_len()
    }

    /// Slope of interior interval `j`.
    pub fn interval_slope(&self, j: usize) -> f64 {
        (self.y_points[j + 1] - self.y_points[j]) / self.interval_len()
    }

    /// Index of the interval containing `x`; requires `B_L <= x < B_R`.
    #[inline]
    pub fn interval_index(&self, x: f64) -> usize {
        let idx = ((x - self.left_boundary) / self.interval_len()).floor();
        // floor can land on N just below B_R
        (idx.max(0.0) as usize).min(self.n_intervals - 1)
    }

    #[inline]
    pub fn region(&self, x: f64) -> Region {
        if x < self.left_boundary {
            Region::Left
        } else if x >= self.right_boundary {
            Region::Right
        } else {
            Region::Interior(self.interval_index(x))
        }
    }

    /// Three-branch evaluation.
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match self.region(x) {
            Region::Left => (x - self.left_boundary) * self.left_slope + self.y_points[0],
            Region::Right => {
                (x - self.right_boundary) * self.right_slope + self.y_points[self.n_intervals]
            }
            Region::Interior(idx) => {
                let b = self.grid_point(idx);
                let k = self.interval_slope(idx);
                (x - b) * k + self.y_points[idx]
            }
        }
    }

    /// Largest absolute slope over all pieces; a Lipschitz constant of the unit.
    pub fn lipschitz(&self) -> f64 {
        (0..self.n_intervals)
            .map(|j| self.interval_slope(j).abs())
            .fold(self.left_slope.abs().max(self.right_slope.abs()), f64::max)
    }

    /// Number of gradient-trained scalars.
    pub fn trainable_len(&self) -> usize {
        4 + self.y_points.len()
    }

    /// Packs trainable scalars as `[B_L, B_R, K_L, K_R, Y_0..Y_N]`.
    pub fn write_trainable(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(&[
            self.left_boundary,
            self.right_boundary,
            self.left_slope,
            self.right_slope,
        ]);
        out.extend_from_slice(&self.y_points);
    }

    /// Inverse of [`write_trainable`](Self::write_trainable). Widths below [`MIN_WIDTH`] are
    /// clamped around the boundary midpoint; non-finite values are rejected.
    pub fn read_trainable(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.trainable_len() {
            return Err(Error::ShapeMismatch {
                expected: vec![self.trainable_len()],
                actual: vec![values.len()],
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateParams(
                "non-finite value after update".into(),
            ));
        }
        let (mut bl, mut br) = (values[0], values[1]);
        if br - bl < MIN_WIDTH {
            let mid = 0.5 * (bl + br);
            bl = mid - 0.5 * MIN_WIDTH;
            br = mid + 0.5 * MIN_WIDTH;
            if br - bl < MIN_WIDTH {
                br = bl + MIN_WIDTH;
            }
        }
        self.left_boundary = bl;
        self.right_boundary = br;
        self.left_slope = values[2];
        self.right_slope = values[3];
        self.y_points.copy_from_slice(&values[4..]);
        self.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> PwluParams {
        PwluParams::new(2, -1.0, 1.0, vec![1.0, -1.0, 1.0], -2.0, 2.0).unwrap()
    }

    #[test]
    fn interval_index_examples() {
        let p = PwluParams::relu_on_grid(4, -2.0, 2.0).unwrap();
        assert_eq!(p.interval_index(0.5), 2);
        assert_eq!(p.interval_index(-2.0), 0);
        let x = 2.0 - 1e-12;
        // brute-force scan over the four intervals
        let scanned = (0..4)
            .find(|&j| p.grid_point(j) <= x && x < p.grid_point(j + 1))
            .unwrap();
        assert_eq!(scanned, 3);
        assert_eq!(p.interval_index(x), 3);
    }

    #[test]
    fn interval_index_clamps_below_right_boundary() {
        // (x - B_L) / d rounds up to N for the largest double below B_R
        let p = PwluParams::relu_on_grid(3, 0.0, 0.3).unwrap();
        let x = f64::from_bits(0.3f64.to_bits() - 1);
        assert!(x < p.right_boundary);
        assert_eq!(p.interval_index(x), 2);
    }

    #[test]
    fn rejects_bad_params() {
        assert!(PwluParams::new(2, 1.0, 1.0, vec![0.0; 3], 0.0, 1.0).is_err());
        assert!(PwluParams::new(2, 1.0, 0.0, vec![0.0; 3], 0.0, 1.0).is_err());
        assert!(PwluParams::new(2, -1.0, 1.0, vec![0.0; 2], 0.0, 1.0).is_err());
        assert!(PwluParams::new(2, -1.0, 1.0, vec![0.0, f64::NAN, 0.0], 0.0, 1.0).is_err());
        assert!(PwluParams::new(0, -1.0, 1.0, vec![0.0], 0.0, 1.0).is_err());
        assert!(PwluParams::new(2, -1.0, f64::INFINITY, vec![0.0; 3], 0.0, 1.0).is_err());
    }

    #[test]
    fn read_trainable_clamps_width() {
        let mut p = sample();
        let mut v = Vec::new();
        p.write_trainable(&mut v);
        v[0] = 0.5;
        v[1] = 0.5;
        p.read_trainable(&v).unwrap();
        assert!(p.right_boundary - p.left_boundary >= MIN_WIDTH);
        v[1] = f64::NAN;
        assert!(p.read_trainable(&v).is_err());
    }

    #[test]
    fn trainable_round_trip() {
        let p = sample();
        let mut v = Vec::new();
        p.write_trainable(&mut v);
        let mut q = PwluParams::relu_on_grid(2, -5.0, 5.0).unwrap();
        q.read_trainable(&v).unwrap();
        assert_eq!(p, q);
    }
}
