//! Datasets (spirals, IDX) and learned-shape export.

mod dataset;
pub mod export;
pub mod idx;
pub mod spirals;

pub use dataset::{DataSplit, LabeledDataset, Standardizer};
pub use export::{export_shapes, ActivationShapeExport};
pub use idx::{load_idx, load_idx_dir};
pub use spirals::{gen_spirals, spirals_split, spirals_split_with_turns};
