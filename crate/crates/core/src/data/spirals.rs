use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::dataset::{DataSplit, LabeledDataset};
use crate::error::Result;
use crate::tensor::Tensor;

pub const DEFAULT_TURNS: f64 = 3.5;

/// Two interleaved 2-D spirals (labels 0 and 1) with isotropic Gaussian noise.
pub fn gen_spirals(n_per_class: usize, noise: f64, seed: u64) -> LabeledDataset {
    gen_spirals_with_turns(n_per_class, noise, DEFAULT_TURNS, seed)
}

pub fn gen_spirals_with_turns(
    n_per_class: usize,
    noise: f64,
    turns: f64,
    seed: u64,
) -> LabeledDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut features = Vec::with_capacity(4 * n_per_class);
    let mut labels = Vec::with_capacity(2 * n_per_class);
    for i in 0..n_per_class {
        let r = (i as f64 + 0.5) / n_per_class as f64;
        for class in 0..2 {
            let theta = r * turns * 2.0 * PI + class as f64 * PI;
            let ex: f64 = normal.sample(&mut rng);
            let ey: f64 = normal.sample(&mut rng);
            features.push(r * theta.cos() + noise * ex);
            features.push(r * theta.sin() + noise * ey);
            labels.push(class);
        }
    }
    LabeledDataset::new(
        Tensor::new(vec![2 * n_per_class, 2], features).expect("consistent shape"),
        labels,
        2,
    )
    .expect("labels in range")
}

/// Independent train and test draws, standardized with training statistics.
pub fn spirals_split(
    n_train_per_class: usize,
    n_test_per_class: usize,
    noise: f64,
    seed: u64,
) -> Result<DataSplit> {
    spirals_split_with_turns(
        n_train_per_class,
        n_test_per_class,
        noise,
        DEFAULT_TURNS,
        seed,
    )
}

pub fn spirals_split_with_turns(
    n_train_per_class: usize,
    n_test_per_class: usize,
    noise: f64,
    turns: f64,
    seed: u64,
) -> Result<DataSplit> {
    let train = gen_spirals_with_turns(n_train_per_class, noise, turns, seed);
    let test = gen_spirals_with_turns(n_test_per_class, noise, turns, seed ^ 0x5EED_7E57);
    Ok(DataSplit { train, test }.standardized())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_sized() {
        let a = gen_spirals(50, 0.1, 9);
        let b = gen_spirals(50, 0.1, 9);
        assert_eq!(a, b);
        assert_eq!(a.len(), 100);
        assert_ne!(a, gen_spirals(50, 0.1, 10));
        let one = gen_spirals(1, 0.0, 0);
        assert_eq!(one.len(), 2);
        assert_eq!(one.labels, vec![0, 1]);
    }

    #[test]
    fn noiseless_classes_are_point_reflections() {
        let d = gen_spirals(10, 0.0, 0);
        for pair in d.features.data().chunks_exact(4) {
            assert!((pair[0] + pair[2]).abs() < 1e-12 && (pair[1] + pair[3]).abs() < 1e-12);
        }
    }
}
