use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FixedKind {
    Relu,
    Swish,
}

/// Parameter-free activation.
#[derive(Debug, Clone)]
pub struct FixedActivation {
    pub kind: FixedKind,
    input: Option<Tensor>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl FixedActivation {
    pub fn new(kind: FixedKind) -> Self {
        Self { kind, input: None }
    }

    pub fn apply(kind: FixedKind, x: f64) -> f64 {
        match kind {
            FixedKind::Relu => x.max(0.0),
            FixedKind::Swish => x * sigmoid(x),
        }
    }

    fn derivative(kind: FixedKind, x: f64) -> f64 {
        match kind {
            FixedKind::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            FixedKind::Swish => {
                let s = sigmoid(x);
                s + x * s * (1.0 - s)
            }
        }
    }

    pub fn forward(&mut self, x: &Tensor, train: bool) -> Tensor {
        let kind = self.kind;
        if train {
            self.input = Some(x.clone());
        }
        x.map(|v| Self::apply(kind, v))
    }

    pub fn backward(&mut self, dy: &Tensor) -> Result<Tensor> {
        let x = self
            .input
            .as_ref()
            .ok_or_else(|| Error::Checkpoint("activation backward before forward".into()))?;
        x.ensure_same_shape(dy)?;
        let data = x
            .data()
            .iter()
            .zip(dy.data())
            .map(|(&xi, &gi)| gi * Self::derivative(self.kind, xi))
            .collect();
        Tensor::new(x.shape().to_vec(), data)
    }

    pub fn cached_input(&self) -> Option<&Tensor> {
        self.input.as_ref()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn swish_derivative_matches_fd() {
        for &x in &[-3.0, -0.5, 0.0, 0.7, 4.0] {
            let h = 1e-6;
            let fd = (FixedActivation::apply(FixedKind::Swish, x + h)
                - FixedActivation::apply(FixedKind::Swish, x - h))
                / (2.0 * h);
            assert!((fd - FixedActivation::derivative(FixedKind::Swish, x)).abs() < 1e-8);
        }
    }
}
