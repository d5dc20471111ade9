//! Piecewise linear unit (PWLU) activations.
//!
//! - [`kernel`]: parameters, the reference three-branch forward pass, analytic backward pass and
//!   the fused `x * S + O` inference table.
//! - [`stats`]: running input statistics, the 3-sigma realignment and IOU alignment reports.
//! - [`nn`]: a small dense/conv engine with SGD and the two-phase PWLU trainer.
//! - [`data`]: spirals generator, IDX loader and learned-shape export.
//! - [`bench`]: latency comparison of ReLU, the reference kernel and the fused kernel.

pub mod bench;
pub mod config;
pub mod data;
mod error;
pub mod kernel;
pub mod nn;
pub mod run;
pub mod stats;
pub mod tensor;

pub use error::{Error, Result};
pub use kernel::{FusedPwluTable, PwluGrads, PwluParams};
pub use stats::{AlignmentReport, RunningStats};
pub use tensor::Tensor;
