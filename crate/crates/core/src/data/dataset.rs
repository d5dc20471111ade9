use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Features `[n, ...]` with one integer label per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub features: Tensor,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl LabeledDataset {
    pub fn new(features: Tensor, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if features.shape().is_empty() || features.shape()[0] != labels.len() {
            return Err(Error::InvalidDataset(format!(
                "{} labels for features of shape {:?}",
                labels.len(),
                features.shape()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::InvalidDataset(format!(
                "label {bad} >= {num_classes} classes"
            )));
        }
        Ok(Self {
            features,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Per-sample shape.
    pub fn sample_shape(&self) -> &[usize] {
        &self.features.shape()[1..]
    }

    pub fn batch(&self, rows: &[usize]) -> (Tensor, Vec<usize>) {
        (
            self.features.select_rows(rows),
            rows.iter().map(|&r| self.labels[r]).collect(),
        )
    }
}

/// Train/test pair.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSplit {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
}

/// Per-feature affine map to zero mean and unit variance, fitted on one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(data: &LabeledDataset) -> Self {
        let dim: usize = data.sample_shape().iter().product();
        let n = data.len().max(1) as f64;
        let mut mean = vec![0.0; dim];
        for row in data.features.data().chunks_exact(dim) {
            mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for row in data.features.data().chunks_exact(dim) {
            var.iter_mut()
                .zip(row)
                .zip(&mean)
                .for_each(|((s, v), m)| *s += (v - m) * (v - m));
        }
        // constant features (e.g. image borders) are only centred
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn apply(&self, data: &mut LabeledDataset) {
        let dim = self.mean.len();
        for row in data.features.data_mut().chunks_exact_mut(dim) {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
    }
}

impl DataSplit {
    /// Standardizes both splits with statistics of the training split.
    pub fn standardized(mut self) -> Self {
        let st = Standardizer::fit(&self.train);
        st.apply(&mut self.train);
        st.apply(&mut self.test);
        self
    }
}
