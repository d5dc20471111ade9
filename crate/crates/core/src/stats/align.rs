use std::fmt::Write as _;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use super::running::RunningStats;
use crate::error::{Error, Result};
use crate::kernel::PwluParams;

/// Below this running std a unit is treated as dead and gets a unit-width window.
pub const MIN_REALIGN_STD: f64 = 1e-8;
pub const SIGMA_MULTIPLIER: f64 = 3.0;
pub const MIN_PERCENTILE_SAMPLES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Resets boundaries to `mu +/- 3 sigma` and the shape to ReLU sampled on the new grid.
pub fn realign_reset(params: &PwluParams, stats: &RunningStats) -> Result<PwluParams> {
    if stats.update_count == 0 {
        return Err(Error::NoStatistics);
    }
    let (lo, hi) = if stats.std < MIN_REALIGN_STD {
        warn!(
            "running std {} below {MIN_REALIGN_STD}; realigning to mean +/- 0.5",
            stats.std
        );
        (stats.mean - 0.5, stats.mean + 0.5)
    } else {
        (
            stats.mean - SIGMA_MULTIPLIER * stats.std,
            stats.mean + SIGMA_MULTIPLIER * stats.std,
        )
    };
    PwluParams::relu_on_grid(params.n_intervals, lo, hi)
}

/// Intersection over union of two closed intervals.
///
/// A zero-length union yields 1 when both are the same point and 0 otherwise.
pub fn compute_iou(a: Interval, b: Interval) -> f64 {
    let inter = (a.hi.min(b.hi) - a.lo.max(b.lo)).max(0.0);
    let union = a.len() + b.len() - inter;
    if union <= 0.0 {
        return if a == b { 1.0 } else { 0.0 };
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Nearest-rank percentile for `percent` in `1..=100`, on sorted data.
fn nearest_rank(sorted: &[f64], percent: usize) -> f64 {
    let n = sorted.len();
    let rank = (percent * n).div_ceil(100).max(1);
    sorted[rank - 1]
}

/// `[p5, p95]` of the samples by nearest rank.
pub fn percentile_interval(samples: &[f64]) -> Result<Interval> {
    if samples.len() < MIN_PERCENTILE_SAMPLES {
        return Err(Error::InsufficientSamples {
            required: MIN_PERCENTILE_SAMPLES,
            actual: samples.len(),
        });
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(Interval::new(
        nearest_rank(&sorted, 5),
        nearest_rank(&sorted, 95),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentRow {
    pub layer_name: String,
    pub unit_index: usize,
    pub boundary: Interval,
    pub input: Interval,
    pub iou: f64,
}

impl AlignmentRow {
    pub fn new(layer_name: &str, unit_index: usize, boundary: Interval, input: Interval) -> Self {
        Self {
            layer_name: layer_name.to_string(),
            unit_index,
            boundary,
            input,
            iou: compute_iou(boundary, input),
        }
    }
}

/// Per-unit alignment between `[B_L, B_R]` and the `[p5, p95]` input interval.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub rows: Vec<AlignmentRow>,
}

pub const ALIGNMENT_CSV_HEADER: &str = "layer_name,unit_index,b_l,b_r,p05,p95,iou";

impl AlignmentReport {
    pub fn mean_iou(&self) -> Option<f64> {
        if self.rows.is_empty() {
            None
        } else {
            Some(self.rows.iter().map(|r| r.iou).sum::<f64>() / self.rows.len() as f64)
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(ALIGNMENT_CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.layer_name,
                r.unit_index,
                r.boundary.lo,
                r.boundary.hi,
                r.input.lo,
                r.input.hi,
                r.iou
            );
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn parse_csv(text: &str) -> Result<Self> {
        let bad = |line: &str| Error::InvalidDataset(format!("bad alignment csv line `{line}`"));
        let mut lines = text.lines();
        if lines.next() != Some(ALIGNMENT_CSV_HEADER) {
            return Err(Error::InvalidDataset("missing alignment csv header".into()));
        }
        let mut rows = Vec::new();
        for line in lines.filter(|l| !l.is_empty()) {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 7 {
                return Err(bad(line));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(line));
            rows.push(AlignmentRow {
                layer_name: f[0].to_string(),
                unit_index: f[1].parse().map_err(|_| bad(line))?,
                boundary: Interval::new(num(f[2])?, num(f[3])?),
                input: Interval::new(num(f[4])?, num(f[5])?),
                iou: num(f[6])?,
            });
        }
        Ok(Self { rows })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats(mean: f64, std: f64) -> RunningStats {
        RunningStats {
            mean,
            std,
            update_count: 1,
            ..Default::default()
        }
    }

    #[test]
    fn reset_examples() {
        let base = PwluParams::relu_on_grid(16, -3.0, 3.0).unwrap();
        let p = realign_reset(&base, &stats(2.0, 0.5)).unwrap();
        assert_eq!((p.left_boundary, p.right_boundary), (0.5, 3.5));
        assert_eq!(p.y_points.len(), 17);
        for j in 0..=16 {
            assert_eq!(p.y_points[j], p.grid_point(j).max(0.0));
        }
        assert_eq!((p.left_slope, p.right_slope), (0.0, 1.0));

        let base = PwluParams::relu_on_grid(2, -1.0, 1.0).unwrap();
        let p = realign_reset(&base, &stats(0.0, 1.0)).unwrap();
        assert_eq!((p.left_boundary, p.right_boundary), (-3.0, 3.0));
        assert_eq!(p.y_points, vec![0.0, 0.0, 3.0]);
    }

    #[test]
    fn reset_gap_around_zero_is_bounded() {
        let base = PwluParams::relu_on_grid(16, -3.0, 3.0).unwrap();
        // mean chosen so that 0 falls mid-interval, the worst case
        let p = realign_reset(&base, &stats(0.1, 0.7)).unwrap();
        let d = p.interval_len();
        let zero_interval = p.interval_index(0.0);
        let mut worst: f64 = 0.0;
        for i in 0..=200_000 {
            let x = p.left_boundary - d
                + (p.right_boundary - p.left_boundary + 2.0 * d) * i as f64 / 200_000.0;
            let dev = (p.eval(x) - x.max(0.0)).abs();
            if dev > 1e-12 {
                assert_eq!(
                    p.region(x),
                    crate::kernel::Region::Interior(zero_interval),
                    "x={x}"
                );
            }
            worst = worst.max(dev);
        }
        assert!(worst <= d / 4.0 + 1e-12, "worst {worst} vs {}", d / 4.0);
        assert!(worst > 0.0);
    }

    #[test]
    fn reset_is_idempotent() {
        let base = PwluParams::relu_on_grid(8, -3.0, 3.0).unwrap();
        let s = stats(1.3, 0.4);
        let once = realign_reset(&base, &s).unwrap();
        assert_eq!(realign_reset(&once, &s).unwrap(), once);
    }

    #[test]
    fn reset_requires_statistics() {
        let base = PwluParams::relu_on_grid(8, -3.0, 3.0).unwrap();
        assert!(matches!(
            realign_reset(&base, &RunningStats::default()),
            Err(Error::NoStatistics)
        ));
    }

    #[test]
    fn dead_unit_gets_unit_window() {
        let base = PwluParams::relu_on_grid(8, -3.0, 3.0).unwrap();
        let p = realign_reset(&base, &stats(2.0, 0.0)).unwrap();
        assert_eq!((p.left_boundary, p.right_boundary), (1.5, 2.5));
    }

    #[test]
    fn iou_examples() {
        assert!(
            (compute_iou(Interval::new(0., 2.), Interval::new(1., 3.)) - 1.0 / 3.0).abs() < 1e-15
        );
        assert_eq!(
            compute_iou(Interval::new(0., 2.), Interval::new(0., 2.)),
            1.0
        );
        assert_eq!(
            compute_iou(Interval::new(0., 1.), Interval::new(2., 3.)),
            0.0
        );
        assert_eq!(
            compute_iou(Interval::new(1., 1.), Interval::new(1., 1.)),
            1.0
        );
        assert_eq!(
            compute_iou(Interval::new(1., 1.), Interval::new(2., 2.)),
            0.0
        );
        assert_eq!(
            compute_iou(Interval::new(1., 1.), Interval::new(0., 2.)),
            0.0
        );
    }

    #[test]
    fn percentile_examples() {
        let s: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(percentile_interval(&s).unwrap(), Interval::new(5.0, 95.0));
        let s: Vec<f64> = (1..=20).rev().map(f64::from).collect();
        assert_eq!(percentile_interval(&s).unwrap(), Interval::new(1.0, 19.0));
        let s = vec![2.5; 30];
        let iv = percentile_interval(&s).unwrap();
        assert_eq!(iv, Interval::new(2.5, 2.5));
        assert!(matches!(
            percentile_interval(&[1.0; 19]),
            Err(Error::InsufficientSamples {
                required: 20,
                actual: 19
            })
        ));
    }

    #[test]
    fn report_csv_round_trip() {
        let report = AlignmentReport {
            rows: vec![
                AlignmentRow::new(
                    "pwlu0",
                    0,
                    Interval::new(-3.0, 3.0),
                    Interval::new(3.3, 6.6),
                ),
                AlignmentRow::new(
                    "pwlu0",
                    1,
                    Interval::new(2.0, 8.0),
                    Interval::new(3.355, 6.645),
                ),
            ],
        };
        let csv = report.to_csv();
        assert!(csv.starts_with("layer_name,unit_index,b_l,b_r,p05,p95,iou\n"));
        assert_eq!(AlignmentReport::parse_csv(&csv).unwrap(), report);
    }
}
