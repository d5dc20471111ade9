//! Inference latency of ReLU, the three-branch reference kernel and the fused kernel.

use std::fmt::Write as _;
use std::hint::black_box;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::kernel::{build_fused, PwluParams};

pub const DEFAULT_REPETITIONS: usize = 500;
pub const DEFAULT_ELEMENTS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub name: &'static str,
    pub mean_ms: f64,
    pub std_ms: f64,
    pub repetitions: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub elements: usize,
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn row(&self, name: &str) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("kernel,elements,repetitions,mean_ms,std_ms\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.name, self.elements, r.repetitions, r.mean_ms, r.std_ms
            );
        }
        out
    }

    /// Table with one column per kernel, ReLU first.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} elements", self.elements);
        let _ = write!(out, "{:<10}", "");
        for r in &self.rows {
            let _ = write!(out, "{:>18}", r.name);
        }
        out.push('\n');
        let _ = write!(out, "{:<10}", "mean ms");
        for r in &self.rows {
            let _ = write!(out, "{:>18.4}", r.mean_ms);
        }
        out.push('\n');
        let _ = write!(out, "{:<10}", "std ms");
        for r in &self.rows {
            let _ = write!(out, "{:>18.4}", r.std_ms);
        }
        out.push('\n');
        out
    }
}

pub fn relu_kernel(input: &[f64], out: &mut [f64]) {
    for (o, &x) in out.iter_mut().zip(input) {
        *o = x.max(0.0);
    }
}

pub fn reference_kernel(params: &PwluParams, input: &[f64], out: &mut [f64]) {
    for (o, &x) in out.iter_mut().zip(input) {
        *o = params.eval(x);
    }
}

fn time_kernel(repetitions: usize, mut f: impl FnMut()) -> (f64, f64) {
    let mut times = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        let start = Instant::now();
        f();
        times.push(start.elapsed().as_secs_f64() * 1e3);
    }
    let n = times.len() as f64;
    let mean = times.iter().sum::<f64>() / n;
    let var = times.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Times each kernel on the same batch of `elements` inputs drawn uniformly over
/// `[B_L - 2w, B_R + 2w]`, where `w` is the boundary width.
pub fn run_bench(
    params: &PwluParams,
    elements: usize,
    repetitions: usize,
    seed: u64,
) -> Result<BenchReport> {
    let table = build_fused(params)?;
    let table32 = table.to_f32();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = params.right_boundary - params.left_boundary;
    let (lo, hi) = (
        params.left_boundary - 2.0 * w,
        params.right_boundary + 2.0 * w,
    );
    let input: Vec<f64> = (0..elements).map(|_| rng.random_range(lo..hi)).collect();
    let input32: Vec<f32> = input.iter().map(|&v| v as f32).collect();
    let mut out = vec![0.0; elements];
    let mut out32 = vec![0.0f32; elements];
    let reps = repetitions.max(1);

    let mut rows = Vec::new();
    let (m, s) = time_kernel(reps, || relu_kernel(black_box(&input), black_box(&mut out)));
    rows.push(BenchRow {
        name: "relu",
        mean_ms: m,
        std_ms: s,
        repetitions: reps,
    });
    let (m, s) = time_kernel(reps, || {
        reference_kernel(black_box(params), black_box(&input), black_box(&mut out))
    });
    rows.push(BenchRow {
        name: "pwlu_reference",
        mean_ms: m,
        std_ms: s,
        repetitions: reps,
    });
    let (m, s) = time_kernel(reps, || {
        table.eval_into(black_box(&input), black_box(&mut out))
    });
    rows.push(BenchRow {
        name: "pwlu_fused",
        mean_ms: m,
        std_ms: s,
        repetitions: reps,
    });
    let (m, s) = time_kernel(reps, || {
        table32.eval_into(black_box(&input32), black_box(&mut out32))
    });
    rows.push(BenchRow {
        name: "pwlu_fused_f32",
        mean_ms: m,
        std_ms: s,
        repetitions: reps,
    });
    Ok(BenchReport { elements, rows })
}
