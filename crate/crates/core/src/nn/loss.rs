use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Mean softmax cross-entropy over a `[B, C]` batch of logits.
#[derive(Debug, Clone)]
pub struct XentOutput {
    pub loss: f64,
    /// Gradient of the mean loss w.r.t. the logits.
    pub grad: Tensor,
    pub correct: usize,
}

pub fn softmax_xent(logits: &Tensor, labels: &[usize]) -> Result<XentOutput> {
    let s = logits.shape();
    if s.len() != 2 || s[0] != labels.len() || s[0] == 0 {
        return Err(Error::ShapeMismatch {
            expected: vec![labels.len(), s.get(1).copied().unwrap_or(0)],
            actual: s.to_vec(),
        });
    }
    let (batch, classes) = (s[0], s[1]);
    let mut grad = vec![0.0; batch * classes];
    let mut loss = 0.0;
    let mut correct = 0;
    for ((row, g), &label) in logits
        .data()
        .chunks_exact(classes)
        .zip(grad.chunks_exact_mut(classes))
        .zip(labels)
    {
        if label >= classes {
            return Err(Error::InvalidDataset(format!(
                "label {label} >= {classes} classes"
            )));
        }
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|&v| (v - max).exp()).sum();
        let log_sum = max + sum.ln();
        loss += log_sum - row[label];
        for (gi, &v) in g.iter_mut().zip(row) {
            *gi = (v - log_sum).exp() / batch as f64;
        }
        g[label] -= 1.0 / batch as f64;
        let argmax = row
            .iter()
            .enumerate()
            .fold(0, |best, (i, &v)| if v > row[best] { i } else { best });
        if argmax == label {
            correct += 1;
        }
    }
    Ok(XentOutput {
        loss: loss / batch as f64,
        grad: Tensor::new(vec![batch, classes], grad)?,
        correct,
    })
}
