use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::PwluParams;
use crate::nn::Model;

pub const SHAPES_CSV_HEADER: &str = "layer,unit,x,y,b_l,b_r,k_l,k_r";
pub const DEFAULT_POINTS_PER_INTERVAL: usize = 16;
pub const DEFAULT_OUTER_POINTS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportedUnit {
    pub layer: String,
    pub unit: usize,
    pub params: PwluParams,
    #[serde(skip)]
    pub samples: Vec<(f64, f64)>,
}

/// Learned unit shapes densely sampled over `[B_L - d, B_R + d]`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ActivationShapeExport {
    pub units: Vec<ExportedUnit>,
}

/// Sample abscissae: `per_interval` points per interval, `B_R` itself, and `outer` points on
/// each side beyond the boundaries. `B_L` and `B_R` are always included.
pub fn sample_points(params: &PwluParams, per_interval: usize, outer: usize) -> Vec<f64> {
    let d = params.interval_len();
    let per = per_interval.max(1);
    let mut xs = Vec::with_capacity(params.n_intervals * per + 2 * outer + 1);
    for k in 0..outer {
        xs.push(params.left_boundary - d + k as f64 * d / outer as f64);
    }
    for j in 0..params.n_intervals {
        let b = params.grid_point(j);
        for s in 0..per {
            xs.push(b + s as f64 * d / per as f64);
        }
    }
    xs.push(params.right_boundary);
    for k in 1..=outer {
        xs.push(params.right_boundary + k as f64 * d / outer as f64);
    }
    xs
}

impl ActivationShapeExport {
    pub fn from_model(model: &Model, per_interval: usize, outer: usize) -> Self {
        let mut units = Vec::new();
        for (i, layer) in model.pwlu_layers() {
            let name = model.layer_name(i);
            for (u, p) in layer.units.iter().enumerate() {
                let samples = sample_points(p, per_interval, outer)
                    .into_iter()
                    .map(|x| (x, p.eval(x)))
                    .collect();
                units.push(ExportedUnit {
                    layer: name.clone(),
                    unit: u,
                    params: p.clone(),
                    samples,
                });
            }
        }
        Self { units }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(SHAPES_CSV_HEADER);
        out.push('\n');
        for u in &self.units {
            let p = &u.params;
            for &(x, y) in &u.samples {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{}",
                    u.layer,
                    u.unit,
                    x,
                    y,
                    p.left_boundary,
                    p.right_boundary,
                    p.left_slope,
                    p.right_slope
                );
            }
        }
        out
    }

    pub fn params_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Writes `shapes.csv` and `params.json` into `dir`, returning both paths.
    pub fn write(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let csv = dir.join("shapes.csv");
        let json = dir.join("params.json");
        std::fs::write(&csv, self.to_csv()).map_err(|e| Error::io(&csv, e))?;
        std::fs::write(&json, self.params_json()?).map_err(|e| Error::io(&json, e))?;
        Ok((csv, json))
    }

    /// Reads a `params.json` sidecar (samples are left empty).
    pub fn read_params(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let export: Self = serde_json::from_str(&text)?;
        for u in &export.units {
            u.params.validate()?;
        }
        Ok(export)
    }
}

/// Parses `shapes.csv` rows as `(layer, unit, x, y)`.
pub fn read_shapes_csv(path: &Path) -> Result<Vec<(String, usize, f64, f64)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |l: &str| Error::InvalidDataset(format!("bad shapes csv line `{l}`"));
    let mut lines = text.lines();
    if lines.next() != Some(SHAPES_CSV_HEADER) {
        return Err(Error::InvalidDataset("missing shapes csv header".into()));
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 8 {
                return Err(bad(l));
            }
            Ok((
                f[0].to_string(),
                f[1].parse().map_err(|_| bad(l))?,
                f[2].parse().map_err(|_| bad(l))?,
                f[3].parse().map_err(|_| bad(l))?,
            ))
        })
        .collect()
}

/// Writes the shape export of `model` to `dir`.
pub fn export_shapes(
    model: &Model,
    dir: &Path,
    per_interval: usize,
    outer: usize,
) -> Result<ActivationShapeExport> {
    let export = ActivationShapeExport::from_model(model, per_interval, outer);
    export.write(dir)?;
    Ok(export)
}

/// Coefficient of determination of the least-squares line through `(x, y)`; 1 for a constant
/// `y`.
pub fn linear_fit_r2(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    if syy <= 0.0 {
        return 1.0;
    }
    if sxx <= 0.0 {
        return 0.0;
    }
    (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0)
}

/// R² of a unit's shape over its own `[B_L, B_R]`.
pub fn unit_linearity(params: &PwluParams) -> f64 {
    let pts: Vec<(f64, f64)> = sample_points(params, DEFAULT_POINTS_PER_INTERVAL, 0)
        .into_iter()
        .map(|x| (x, params.eval(x)))
        .collect();
    linear_fit_r2(&pts)
}
