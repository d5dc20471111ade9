use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const DEFAULT_CAPACITY: usize = 4096;

/// Fixed-capacity uniform sample of a stream (Algorithm R).
#[derive(Debug, Clone)]
pub struct Reservoir {
    capacity: usize,
    seed: u64,
    seen: u64,
    samples: Vec<f64>,
    rng: ChaCha8Rng,
}

impl Reservoir {
    pub fn new(capacity: usize, seed: u64) -> Self {
        Self {
            capacity,
            seed,
            seen: 0,
            samples: Vec::with_capacity(capacity.min(1 << 16)),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Rebuilds a reservoir from its persisted state.
    pub fn from_parts(
        capacity: usize,
        seed: u64,
        word_pos: u128,
        seen: u64,
        samples: Vec<f64>,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_word_pos(word_pos);
        Self {
            capacity,
            seed,
            seen,
            samples,
            rng,
        }
    }

    pub fn push(&mut self, value: f64) {
        self.seen += 1;
        if self.samples.len() < self.capacity {
            self.samples.push(value);
        } else {
            let j = self.rng.random_range(0..self.seen);
            if (j as usize) < self.capacity {
                self.samples[j as usize] = value;
            }
        }
    }

    pub fn extend(&mut self, values: impl IntoIterator<Item = f64>) {
        for v in values {
            self.push(v);
        }
    }

    pub fn clear(&mut self) {
        self.seen = 0;
        self.samples.clear();
        self.rng = ChaCha8Rng::seed_from_u64(self.seed);
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn seen(&self) -> u64 {
        self.seen
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn word_pos(&self) -> u128 {
        self.rng.get_word_pos()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keeps_everything_under_capacity() {
        let mut r = Reservoir::new(10, 1);
        r.extend((0..7).map(f64::from));
        assert_eq!(r.samples(), &[0., 1., 2., 3., 4., 5., 6.]);
    }

    #[test]
    fn bounded_and_roughly_uniform() {
        let mut r = Reservoir::new(1000, 7);
        r.extend((0..100_000).map(f64::from));
        assert_eq!(r.samples().len(), 1000);
        assert_eq!(r.seen(), 100_000);
        let mean = r.samples().iter().sum::<f64>() / 1000.0;
        // uniform over [0, 1e5): sd of the sample mean is about 913
        assert!((mean - 50_000.0).abs() < 4_000.0, "mean {mean}");
    }

    #[test]
    fn resumes_from_parts() {
        let mut a = Reservoir::new(16, 3);
        a.extend((0..100).map(f64::from));
        let mut b = Reservoir::from_parts(16, 3, a.word_pos(), a.seen(), a.samples().to_vec());
        a.extend((100..500).map(f64::from));
        b.extend((100..500).map(f64::from));
        assert_eq!(a.samples(), b.samples());
    }
}
