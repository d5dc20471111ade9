use serde::{Deserialize, Serialize};

/// SGD with heavy-ball momentum and decoupled-from-velocity weight decay:
/// `v = m * v + g`, `p = p - lr * (v + wd * p)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sgd {
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Sgd {
    pub fn new(momentum: f64, weight_decay: f64) -> Self {
        Self {
            momentum,
            weight_decay,
        }
    }

    pub fn step(
        &self,
        params: &mut [f64],
        grads: &[f64],
        velocity: &mut [f64],
        lr: f64,
        decay: bool,
    ) {
        debug_assert_eq!(params.len(), grads.len());
        debug_assert_eq!(params.len(), velocity.len());
        let wd = if decay { self.weight_decay } else { 0.0 };
        for ((p, &g), v) in params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
            *v = self.momentum * *v + g;
            *p -= lr * (*v + wd * *p);
        }
    }
}
