//! Minimal dense-tensor network engine and the two-phase PWLU trainer.

pub mod activation;
pub mod checkpoint;
pub mod conv;
pub mod dense;
pub mod loss;
pub mod model;
pub mod optim;
pub mod pwlu_layer;
pub mod schedule;
pub mod trainer;

pub use checkpoint::ModelCheckpoint;
pub use model::{ActivationSpec, Layer, LayerSpec, Model, ModelSpec, PwluSpec};
pub use optim::Sgd;
pub use pwlu_layer::{init_pwlu_relu, Granularity, PwluLayer};
pub use schedule::{LrCurve, TrainSchedule};
pub use trainer::{
    metrics_csv, train_from, train_two_phase, EpochMetrics, RealignReports, StepMetrics,
    TrainOutcome, Trainer,
};
