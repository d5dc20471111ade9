//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use pwlu_core::kernel::{accumulate_element, ParamGrads};
use pwlu_core::PwluParams;
use rand::Rng;

pub const FD_STEP: f64 = 1e-5;

/// Random valid parameters: N in 1..=24, width in [0.5, 12], heights in [-3, 3], outer slopes
/// in [-2, 2].
pub fn random_params<R: Rng>(rng: &mut R) -> PwluParams {
    let n = rng.random_range(1..=24);
    let bl = rng.random_range(-6.0..6.0);
    let width = rng.random_range(0.5..12.0);
    let y = (0..=n).map(|_| rng.random_range(-3.0..3.0)).collect();
    PwluParams::new(
        n,
        bl,
        bl + width,
        y,
        rng.random_range(-2.0..2.0),
        rng.random_range(-2.0..2.0),
    )
    .unwrap()
}

/// Interpolation by scanning demarcation points left to right; grid points are recomputed as
/// `B_L + j * (B_R - B_L) / N` on every step.
pub fn linear_scan(p: &PwluParams, x: f64) -> f64 {
    let n = p.n_intervals;
    let (bl, br) = (p.left_boundary, p.right_boundary);
    if x < bl {
        return p.y_points[0] + (x - bl) * p.left_slope;
    }
    if x >= br {
        return p.y_points[n] + (x - br) * p.right_slope;
    }
    let d = (br - bl) / n as f64;
    let mut j = 0;
    while j + 1 < n && bl + (j + 1) as f64 * d <= x {
        j += 1;
    }
    let left = bl + j as f64 * d;
    let slope = (p.y_points[j + 1] - p.y_points[j]) / d;
    p.y_points[j] + (x - left) * slope
}

/// Condition scale of evaluating a unit at `x`: it bounds every intermediate term of both the
/// three-branch form and the fused form `x * S + O` (`|Y|`, `|x * K|`, `|B * K|`, the offset),
/// plus the error a rounded grid point `B_L + j * d` picks up when multiplied by a slope.
/// Rounding differences between two correct evaluations are a few ulps of this.
pub fn eval_scale(p: &PwluParams, x: f64) -> f64 {
    let y_max = p.y_points.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    y_max + p.lipschitz() * (x.abs() + p.left_boundary.abs() + p.right_boundary.abs())
}

/// Point at least `margin` (as a fraction of the interval length) away from every grid point
/// and boundary, in a randomly chosen region.
pub fn off_grid_x<R: Rng>(p: &PwluParams, margin: f64, rng: &mut R) -> f64 {
    let d = p.interval_len();
    let width = p.right_boundary - p.left_boundary;
    match rng.random_range(0..6) {
        0 => p.left_boundary - rng.random_range(margin * d..width),
        1 => p.right_boundary + rng.random_range(margin * d..width),
        _ => {
            let j = rng.random_range(0..p.n_intervals);
            p.grid_point(j) + rng.random_range(margin..1.0 - margin) * d
        }
    }
}

/// Central differences of `f(x)` with respect to every packed trainable scalar
/// `[B_L, B_R, K_L, K_R, Y_0..Y_N]`, followed by the input derivative.
pub fn fd_grads(p: &PwluParams, x: f64, h: f64) -> Vec<f64> {
    let mut base = Vec::new();
    p.write_trainable(&mut base);
    let mut out = Vec::with_capacity(base.len() + 1);
    for k in 0..base.len() {
        let mut plus = p.clone();
        let mut minus = p.clone();
        let mut v = base.clone();
        v[k] += h;
        plus.read_trainable(&v).unwrap();
        v[k] = base[k] - h;
        minus.read_trainable(&v).unwrap();
        out.push((plus.eval(x) - minus.eval(x)) / (2.0 * h));
    }
    out.push((p.eval(x + h) - p.eval(x - h)) / (2.0 * h));
    out
}

/// Analytic gradients in the same layout as [`fd_grads`].
pub fn analytic_grads(p: &PwluParams, x: f64) -> Vec<f64> {
    let mut g = ParamGrads::zeros_like(p);
    let dx = accumulate_element(p, x, 1.0, &mut g);
    let mut out = Vec::new();
    g.write_packed(&mut out);
    out.push(dx);
    out
}

pub fn grads_agree(analytic: f64, fd: f64, rel: f64, abs: f64) -> bool {
    let err = (analytic - fd).abs();
    err <= abs || err <= rel * analytic.abs().max(fd.abs())
}
