use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Fully connected layer, `y = W x + b` with `W` stored `[out, in]` row-major.
#[derive(Debug, Clone)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub grad_weight: Vec<f64>,
    pub grad_bias: Vec<f64>,
    pub vel_weight: Vec<f64>,
    pub vel_bias: Vec<f64>,
    input: Option<Tensor>,
}

impl Dense {
    pub fn from_weights(
        in_dim: usize,
        out_dim: usize,
        weight: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self> {
        if weight.len() != in_dim * out_dim || bias.len() != out_dim {
            return Err(Error::ShapeMismatch {
                expected: vec![out_dim, in_dim],
                actual: vec![weight.len(), bias.len()],
            });
        }
        Ok(Self {
            in_dim,
            out_dim,
            grad_weight: vec![0.0; weight.len()],
            grad_bias: vec![0.0; out_dim],
            vel_weight: vec![0.0; weight.len()],
            vel_bias: vec![0.0; out_dim],
            weight,
            bias,
            input: None,
        })
    }

    /// He-normal weights, zero bias.
    pub fn init<R: Rng>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, (2.0 / in_dim as f64).sqrt()).expect("valid std");
        let weight = (0..in_dim * out_dim).map(|_| normal.sample(rng)).collect();
        Self::from_weights(in_dim, out_dim, weight, vec![0.0; out_dim]).expect("consistent shapes")
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let out = dense_forward(x, &self.weight, &self.bias, self.in_dim, self.out_dim)?;
        self.input = Some(x.clone());
        Ok(out)
    }

    pub fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        let x = self
            .input
            .as_ref()
            .ok_or_else(|| Error::Checkpoint("dense backward before forward".into()))?;
        let (dx, gw, gb) = dense_backward(x, dy, &self.weight, self.in_dim, self.out_dim)?;
        self.grad_weight = gw;
        self.grad_bias = gb;
        Ok(dx)
    }

    pub fn cached_input(&self) -> Option<&Tensor> {
        self.input.as_ref()
    }
}

/// `[B, in] -> [B, out]`.
pub fn dense_forward(
    x: &Tensor,
    weight: &[f64],
    bias: &[f64],
    in_dim: usize,
    out_dim: usize,
) -> Result<Tensor> {
    if x.shape().len() != 2 || x.shape()[1] != in_dim {
        return Err(Error::ShapeMismatch {
            expected: vec![x.shape().first().copied().unwrap_or(0), in_dim],
            actual: x.shape().to_vec(),
        });
    }
    let batch = x.shape()[0];
    let mut out = vec![0.0; batch * out_dim];
    for (xr, yr) in x
        .data()
        .chunks_exact(in_dim)
        .zip(out.chunks_exact_mut(out_dim))
    {
        for (o, y) in yr.iter_mut().enumerate() {
            let w = &weight[o * in_dim..(o + 1) * in_dim];
            *y = bias[o] + w.iter().zip(xr).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    Tensor::new(vec![batch, out_dim], out)
}

/// Returns `(dx, dW, db)`, with parameter gradients summed over the batch.
pub fn dense_backward(
    x: &Tensor,
    dy: &Tensor,
    weight: &[f64],
    in_dim: usize,
    out_dim: usize,
) -> Result<(Tensor, Vec<f64>, Vec<f64>)> {
    let batch = x.shape()[0];
    if dy.shape() != [batch, out_dim] {
        return Err(Error::ShapeMismatch {
            expected: vec![batch, out_dim],
            actual: dy.shape().to_vec(),
        });
    }
    let mut dx = vec![0.0; batch * in_dim];
    let mut gw = vec![0.0; in_dim * out_dim];
    let mut gb = vec![0.0; out_dim];
    for ((xr, dyr), dxr) in x
        .data()
        .chunks_exact(in_dim)
        .zip(dy.data().chunks_exact(out_dim))
        .zip(dx.chunks_exact_mut(in_dim))
    {
        for (o, &g) in dyr.iter().enumerate() {
            gb[o] += g;
            let w = &weight[o * in_dim..(o + 1) * in_dim];
            let gwr = &mut gw[o * in_dim..(o + 1) * in_dim];
            for i in 0..in_dim {
                gwr[i] += g * xr[i];
                dxr[i] += g * w[i];
            }
        }
    }
    Ok((Tensor::new(vec![batch, in_dim], dx)?, gw, gb))
}
