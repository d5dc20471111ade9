use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Geometry of a stride-1 square-kernel convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub padding: usize,
}

impl ConvGeometry {
    pub fn weight_len(&self) -> usize {
        self.out_channels * self.in_channels * self.kernel * self.kernel
    }

    /// Output spatial size, or `None` when the kernel does not fit.
    pub fn output_hw(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        let ph = h + 2 * self.padding;
        let pw = w + 2 * self.padding;
        if ph < self.kernel || pw < self.kernel {
            return None;
        }
        Some((ph - self.kernel + 1, pw - self.kernel + 1))
    }

    fn check_input(&self, x: &Tensor) -> Result<(usize, usize, usize, usize, usize)> {
        let s = x.shape();
        let err = || Error::ShapeMismatch {
            expected: vec![s.first().copied().unwrap_or(0), self.in_channels, 0, 0],
            actual: s.to_vec(),
        };
        if s.len() != 4 || s[1] != self.in_channels {
            return Err(err());
        }
        let (oh, ow) = self.output_hw(s[2], s[3]).ok_or_else(err)?;
        Ok((s[0], s[2], s[3], oh, ow))
    }
}

/// `[B, C_in, H, W] -> [B, C_out, H', W']`, zero padding, stride 1.
pub fn conv2d_forward(
    x: &Tensor,
    weight: &[f64],
    bias: &[f64],
    g: &ConvGeometry,
) -> Result<Tensor> {
    let (batch, h, w, oh, ow) = g.check_input(x)?;
    let (k, p, cin, cout) = (g.kernel, g.padding as isize, g.in_channels, g.out_channels);
    let xd = x.data();
    let mut out = vec![0.0; batch * cout * oh * ow];
    for b in 0..batch {
        for co in 0..cout {
            let obase = (b * cout + co) * oh * ow;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = bias[co];
                    for ci in 0..cin {
                        let xbase = (b * cin + ci) * h * w;
                        let wbase = (co * cin + ci) * k * k;
                        for ky in 0..k {
                            let iy = oy as isize + ky as isize - p;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for kx in 0..k {
                                let ix = ox as isize + kx as isize - p;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                acc += weight[wbase + ky * k + kx]
                                    * xd[xbase + iy as usize * w + ix as usize];
                            }
                        }
                    }
                    out[obase + oy * ow + ox] = acc;
                }
            }
        }
    }
    Tensor::new(vec![batch, cout, oh, ow], out)
}

/// Returns `(dx, dW, db)`, with parameter gradients summed over the batch.
pub fn conv2d_backward(
    x: &Tensor,
    dy: &Tensor,
    weight: &[f64],
    g: &ConvGeometry,
) -> Result<(Tensor, Vec<f64>, Vec<f64>)> {
    let (batch, h, w, oh, ow) = g.check_input(x)?;
    let (k, p, cin, cout) = (g.kernel, g.padding as isize, g.in_channels, g.out_channels);
    if dy.shape() != [batch, cout, oh, ow] {
        return Err(Error::ShapeMismatch {
            expected: vec![batch, cout, oh, ow],
            actual: dy.shape().to_vec(),
        });
    }
    let (xd, dyd) = (x.data(), dy.data());
    let mut dx = vec![0.0; xd.len()];
    let mut gw = vec![0.0; weight.len()];
    let mut gb = vec![0.0; cout];
    for b in 0..batch {
        for co in 0..cout {
            let obase = (b * cout + co) * oh * ow;
            for oy in 0..oh {
                for ox in 0..ow {
                    let gout = dyd[obase + oy * ow + ox];
                    gb[co] += gout;
                    for ci in 0..cin {
                        let xbase = (b * cin + ci) * h * w;
                        let wbase = (co * cin + ci) * k * k;
                        for ky in 0..k {
                            let iy = oy as isize + ky as isize - p;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for kx in 0..k {
                                let ix = ox as isize + kx as isize - p;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                let xi = xbase + iy as usize * w + ix as usize;
                                gw[wbase + ky * k + kx] += gout * xd[xi];
                                dx[xi] += gout * weight[wbase + ky * k + kx];
                            }
                        }
                    }
                }
            }
        }
    }
    Ok((Tensor::new(x.shape().to_vec(), dx)?, gw, gb))
}

#[derive(Debug, Clone)]
pub struct Conv2d {
    pub geometry: ConvGeometry,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub grad_weight: Vec<f64>,
    pub grad_bias: Vec<f64>,
    pub vel_weight: Vec<f64>,
    pub vel_bias: Vec<f64>,
    input: Option<Tensor>,
}

impl Conv2d {
    pub fn from_weights(geometry: ConvGeometry, weight: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if weight.len() != geometry.weight_len() || bias.len() != geometry.out_channels {
            return Err(Error::ShapeMismatch {
                expected: vec![geometry.weight_len(), geometry.out_channels],
                actual: vec![weight.len(), bias.len()],
            });
        }
        Ok(Self {
            geometry,
            grad_weight: vec![0.0; weight.len()],
            grad_bias: vec![0.0; bias.len()],
            vel_weight: vec![0.0; weight.len()],
            vel_bias: vec![0.0; bias.len()],
            weight,
            bias,
            input: None,
        })
    }

    pub fn init<R: Rng>(geometry: ConvGeometry, rng: &mut R) -> Self {
        let fan_in = geometry.in_channels * geometry.kernel * geometry.kernel;
        let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("valid std");
        let weight = (0..geometry.weight_len())
            .map(|_| normal.sample(rng))
            .collect();
        Self::from_weights(geometry, weight, vec![0.0; geometry.out_channels])
            .expect("consistent shapes")
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        let y = conv2d_forward(x, &self.weight, &self.bias, &self.geometry)?;
        self.input = Some(x.clone());
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        let x = self
            .input
            .as_ref()
            .ok_or_else(|| Error::Checkpoint("conv backward before forward".into()))?;
        let (dx, gw, gb) = conv2d_backward(x, dy, &self.weight, &self.geometry)?;
        self.grad_weight = gw;
        self.grad_bias = gb;
        Ok(dx)
    }

    pub fn cached_input(&self) -> Option<&Tensor> {
        self.input.as_ref()
    }
}
