use serde::{Deserialize, Serialize};

use super::params::{PwluParams, Region};
use crate::error::Result;
use crate::tensor::Tensor;

/// Accumulated partial derivatives for the trainable fields of one [`PwluParams`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamGrads {
    pub left_boundary: f64,
    pub right_boundary: f64,
    pub y_points: Vec<f64>,
    pub left_slope: f64,
    pub right_slope: f64,
}

impl ParamGrads {
    pub fn zeros_like(params: &PwluParams) -> Self {
        Self {
            left_boundary: 0.0,
            right_boundary: 0.0,
            y_points: vec![0.0; params.y_points.len()],
            left_slope: 0.0,
            right_slope: 0.0,
        }
    }

    pub fn reset(&mut self) {
        self.left_boundary = 0.0;
        self.right_boundary = 0.0;
        self.left_slope = 0.0;
        self.right_slope = 0.0;
        self.y_points.iter_mut().for_each(|g| *g = 0.0);
    }

    /// Same layout as [`PwluParams::write_trainable`].
    pub fn write_packed(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(&[
            self.left_boundary,
            self.right_boundary,
            self.left_slope,
            self.right_slope,
        ]);
        out.extend_from_slice(&self.y_points);
    }
}

/// Output of [`backward`].
#[derive(Debug, Clone, PartialEq)]
pub struct PwluGrads {
    pub params: ParamGrads,
    pub input_grad: Tensor,
}

/// Elementwise three-branch forward pass.
pub fn forward_reference(x: &Tensor, params: &PwluParams) -> Result<Tensor> {
    params.validate()?;
    Ok(x.map(|v| params.eval(v)))
}

/// Adds the contribution of one element to `grads` and returns `dL/dx`.
///
/// The interval index is held constant, so at a demarcation point the element is treated as
/// belonging to the interval on its right.
#[inline]
pub fn accumulate_element(
    params: &PwluParams,
    x: f64,
    upstream: f64,
    grads: &mut ParamGrads,
) -> f64 {
    match params.region(x) {
        Region::Left => {
            grads.left_boundary -= upstream * params.left_slope;
            grads.left_slope += upstream * (x - params.left_boundary);
            grads.y_points[0] += upstream;
            upstream * params.left_slope
        }
        Region::Right => {
            grads.right_boundary -= upstream * params.right_slope;
            grads.right_slope += upstream * (x - params.right_boundary);
            grads.y_points[params.n_intervals] += upstream;
            upstream * params.right_slope
        }
        Region::Interior(idx) => {
            let d = params.interval_len();
            let width = params.right_boundary - params.left_boundary;
            let k = params.interval_slope(idx);
            let b_lo = params.grid_point(idx);
            let b_hi = params.grid_point(idx + 1);
            grads.left_boundary += upstream * k * (x - params.right_boundary) / width;
            grads.right_boundary += upstream * k * (params.left_boundary - x) / width;
            grads.y_points[idx] += upstream * (b_hi - x) / d;
            grads.y_points[idx + 1] += upstream * (x - b_lo) / d;
            upstream * k
        }
    }
}

/// Analytic backward pass. Parameter gradients are summed over all elements in order.
pub fn backward(x: &Tensor, upstream: &Tensor, params: &PwluParams) -> Result<PwluGrads> {
    x.ensure_same_shape(upstream)?;
    params.validate()?;
    let mut grads = ParamGrads::zeros_like(params);
    let input_grad: Vec<f64> = x
        .data()
        .iter()
        .zip(upstream.data())
        .map(|(&xi, &ui)| accumulate_element(params, xi, ui, &mut grads))
        .collect();
    Ok(PwluGrads {
        params: grads,
        input_grad: Tensor::new(x.shape().to_vec(), input_grad)?,
    })
}
