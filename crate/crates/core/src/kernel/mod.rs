//! Piecewise linear unit: parameters, reference forward/backward and the fused inference table.

mod fused;
mod params;
mod reference;

pub use fused::{build_fused, forward_fused, FusedFloat, FusedPwluTable, FusedPwluTableF32};
pub use params::{PwluParams, Region, MIN_WIDTH};
pub use reference::{accumulate_element, backward, forward_reference, ParamGrads, PwluGrads};
