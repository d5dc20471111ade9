//! Branch-free inference form: `y = x * S[idx'] + O[idx']` with
//! `idx' = clip(floor((x - B_L) / d), -1, N)`.

use serde::{Deserialize, Serialize};

use super::params::PwluParams;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub trait FusedFloat:
    Copy + std::ops::Sub<Output = Self> + std::ops::Mul<Output = Self> + std::ops::Add<Output = Self>
{
    fn from_f64(v: f64) -> Self;
    fn floor(self) -> Self;
    fn clamp(self, lo: Self, hi: Self) -> Self;
    fn to_index(self) -> usize;
}

macro_rules! impl_fused_float {
    ($t:ty) => {
        impl FusedFloat for $t {
            #[inline(always)]
            fn from_f64(v: f64) -> Self {
                v as $t
            }
            #[inline(always)]
            fn floor(self) -> Self {
                <$t>::floor(self)
            }
            #[inline(always)]
            fn clamp(self, lo: Self, hi: Self) -> Self {
                self.max(lo).min(hi)
            }
            #[inline(always)]
            fn to_index(self) -> usize {
                self as usize
            }
        }
    };
}

impl_fused_float!(f32);
impl_fused_float!(f64);

/// Precomputed slope/offset tables. Entry `i` of `slopes`/`offsets` holds extended index
/// `i - 1`, so `slopes[0] = K_L` and `slopes[N + 1] = K_R`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedPwluTable<T = f64> {
    pub slopes: Vec<T>,
    pub offsets: Vec<T>,
    pub left_boundary: T,
    pub inv_interval_len: T,
    pub n_intervals: usize,
}

pub type FusedPwluTableF32 = FusedPwluTable<f32>;

/// Builds the double-precision table.
pub fn build_fused(params: &PwluParams) -> Result<FusedPwluTable<f64>> {
    params.validate()?;
    let d = params.interval_len();
    if !(d > 0.0) || !d.is_finite() {
        return Err(Error::DegenerateParams(format!("interval length {d}")));
    }
    let n = params.n_intervals;
    let mut slopes = Vec::with_capacity(n + 2);
    let mut offsets = Vec::with_capacity(n + 2);
    slopes.push(params.left_slope);
    offsets.push(params.y_points[0] - params.left_boundary * params.left_slope);
    for j in 0..n {
        let k = params.interval_slope(j);
        slopes.push(k);
        offsets.push(params.y_points[j] - params.grid_point(j) * k);
    }
    slopes.push(params.right_slope);
    offsets.push(params.y_points[n] - params.right_boundary * params.right_slope);
    Ok(FusedPwluTable {
        slopes,
        offsets,
        left_boundary: params.left_boundary,
        inv_interval_len: 1.0 / d,
        n_intervals: n,
    })
}

impl FusedPwluTable<f64> {
    /// Narrows every entry to single precision.
    pub fn to_f32(&self) -> FusedPwluTableF32 {
        FusedPwluTable {
            slopes: self.slopes.iter().map(|&v| v as f32).collect(),
            offsets: self.offsets.iter().map(|&v| v as f32).collect(),
            left_boundary: self.left_boundary as f32,
            inv_interval_len: self.inv_interval_len as f32,
            n_intervals: self.n_intervals,
        }
    }
}

impl<T: FusedFloat> FusedPwluTable<T> {
    /// Extended interval index in `-1..=N`.
    #[inline(always)]
    pub fn extended_index(&self, x: T) -> isize {
        self.slot(x) as isize - 1
    }

    #[inline(always)]
    fn slot(&self, x: T) -> usize {
        let t = ((x - self.left_boundary) * self.inv_interval_len).floor();
        let t = t.clamp(T::from_f64(-1.0), T::from_f64(self.n_intervals as f64));
        (t + T::from_f64(1.0)).to_index()
    }

    #[inline(always)]
    pub fn eval(&self, x: T) -> T {
        let i = self.slot(x);
        x * self.slopes[i] + self.offsets[i]
    }

    /// Evaluates `input` into `out`; both slices must have equal length.
    pub fn eval_into(&self, input: &[T], out: &mut [T]) {
        assert_eq!(input.len(), out.len());
        for (o, &x) in out.iter_mut().zip(input) {
            *o = self.eval(x);
        }
    }
}

pub fn forward_fused(x: &Tensor, table: &FusedPwluTable<f64>) -> Tensor {
    x.map(|v| table.eval(v))
}
