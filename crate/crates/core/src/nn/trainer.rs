//! Two-phase PWLU training.
//!
//! Iterations `[0, T')` keep every PWLU layer frozen in its ReLU form while collecting input
//! statistics; the step at `T'` resets each unit to `mu +/- 3 sigma` and from then on all
//! parameters train by gradient. With `T' = 0` the units train from their initial boundaries.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::model::Model;
use super::optim::Sgd;
use super::schedule::{iterations_per_epoch, TrainSchedule};
use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::stats::AlignmentReport;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepMetrics {
    pub iteration: usize,
    pub loss: f64,
    pub correct: usize,
    pub count: usize,
    pub lr: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RealignReports {
    /// Boundaries just before the reset against the Phase I input percentiles.
    pub pre_reset: Option<AlignmentReport>,
    /// Boundaries just after the reset against the same percentiles.
    pub post_reset: Option<AlignmentReport>,
}

#[derive(Debug, Clone)]
pub struct Trainer {
    pub model: Model,
    pub schedule: TrainSchedule,
    pub reports: RealignReports,
    sgd: Sgd,
    iteration: usize,
    n_train: usize,
    order: Vec<usize>,
    order_epoch: Option<usize>,
}

impl Trainer {
    /// Prepares a fresh run. With realignment enabled every PWLU layer is frozen and collects
    /// statistics until the realign iteration.
    pub fn new(mut model: Model, schedule: TrainSchedule, n_train: usize) -> Result<Self> {
        schedule.validate()?;
        if n_train == 0 {
            return Err(Error::EmptyBatch);
        }
        let phase_one = schedule.realign_enabled();
        for (_, p) in model.pwlu_layers_mut() {
            p.frozen = phase_one;
            p.collecting = phase_one;
        }
        Ok(Self::restore(
            model,
            schedule,
            n_train,
            0,
            RealignReports::default(),
        ))
    }

    /// Rebuilds a trainer at `iteration` without touching layer flags.
    pub(crate) fn restore(
        model: Model,
        schedule: TrainSchedule,
        n_train: usize,
        iteration: usize,
        reports: RealignReports,
    ) -> Self {
        Self {
            sgd: Sgd::new(schedule.momentum, schedule.weight_decay),
            model,
            schedule,
            reports,
            iteration,
            n_train,
            order: Vec::new(),
            order_epoch: None,
        }
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn n_train(&self) -> usize {
        self.n_train
    }

    pub fn is_finished(&self) -> bool {
        self.iteration >= self.schedule.total_iterations
    }

    pub fn iterations_per_epoch(&self) -> usize {
        iterations_per_epoch(self.n_train, self.schedule.batch_size)
    }

    /// Shuffle state: the data order of epoch `e` is drawn from stream `e` of a ChaCha8 generator
    /// seeded with the schedule seed.
    pub fn rng_state(&self) -> (u64, u64) {
        (
            self.schedule.seed,
            (self.iteration / self.iterations_per_epoch()) as u64,
        )
    }

    fn batch_indices(&mut self, t: usize) -> Vec<usize> {
        let per_epoch = self.iterations_per_epoch();
        let epoch = t / per_epoch;
        if self.order_epoch != Some(epoch) {
            let mut rng = ChaCha8Rng::seed_from_u64(self.schedule.seed);
            rng.set_stream(epoch as u64);
            self.order = (0..self.n_train).collect();
            self.order.shuffle(&mut rng);
            self.order_epoch = Some(epoch);
        }
        let b = t % per_epoch;
        let bs = self.schedule.batch_size;
        self.order[b * bs..((b + 1) * bs).min(self.n_train)].to_vec()
    }

    fn realign(&mut self) -> Result<()> {
        let mut pre = AlignmentReport::default();
        let mut post = AlignmentReport::default();
        let names: Vec<String> = (0..self.model.layers.len())
            .map(|i| self.model.layer_name(i))
            .collect();
        for (i, p) in self.model.pwlu_layers_mut() {
            pre.rows.extend(p.reservoir_alignment(&names[i]));
            p.realign()?;
            post.rows.extend(p.reservoir_alignment(&names[i]));
        }
        log::info!(
            "realigned at iteration {}: mean IOU {:?} -> {:?}",
            self.iteration,
            pre.mean_iou(),
            post.mean_iou()
        );
        self.reports.pre_reset = Some(pre);
        self.reports.post_reset = Some(post);
        Ok(())
    }

    /// Runs one optimization step on the next batch of `data`.
    pub fn step(&mut self, data: &LabeledDataset) -> Result<StepMetrics> {
        if self.is_finished() {
            return Err(Error::Schedule("training already finished".into()));
        }
        if data.len() != self.n_train {
            return Err(Error::InvalidDataset(format!(
                "trainer expects {} samples, dataset has {}",
                self.n_train,
                data.len()
            )));
        }
        let t = self.iteration;
        if self.schedule.realign_enabled() && t == self.schedule.realign_iteration {
            self.realign()?;
        }
        let rows = self.batch_indices(t);
        let (x, labels) = data.batch(&rows);
        let logits = self.model.forward(&x, true)?;
        let out = super::loss::softmax_xent(&logits, &labels)?;
        if !out.loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                iteration: t,
                layer: self.model.first_non_finite_layer(Some(&logits)),
            });
        }
        self.model.backward(&out.grad)?;
        let lr = self.schedule.lr(t);
        self.model
            .sgd_step(&self.sgd, lr, lr * self.schedule.pwlu_lr_multiplier)
            .map_err(|e| match e {
                Error::DegenerateParams(_) => Error::NonFiniteLoss {
                    iteration: t,
                    layer: self.model.first_non_finite_layer(None),
                },
                e => e,
            })?;
        self.iteration += 1;
        Ok(StepMetrics {
            iteration: t,
            loss: out.loss,
            correct: out.correct,
            count: labels.len(),
            lr,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub iteration: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub test_loss: f64,
    pub test_accuracy: f64,
}

pub const METRICS_CSV_HEADER: &str =
    "epoch,iteration,lr,train_loss,train_accuracy,test_loss,test_accuracy";

impl EpochMetrics {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.epoch,
            self.iteration,
            self.lr,
            self.train_loss,
            self.train_accuracy,
            self.test_loss,
            self.test_accuracy
        )
    }
}

pub fn metrics_csv(rows: &[EpochMetrics]) -> String {
    let mut out = String::from(METRICS_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Finished trainer; holds the model and the realignment reports.
    pub trainer: Trainer,
    pub epochs: Vec<EpochMetrics>,
    /// Alignment of the trained boundaries against the inputs seen on the training set.
    pub final_report: AlignmentReport,
}

impl TrainOutcome {
    pub fn model(&self) -> &Model {
        &self.trainer.model
    }

    pub fn reports(&self) -> &RealignReports {
        &self.trainer.reports
    }

    pub fn final_test_accuracy(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.test_accuracy)
    }
}

/// Runs the full schedule, recording loss and accuracy after every epoch.
pub fn train_two_phase(
    model: Model,
    train: &LabeledDataset,
    test: &LabeledDataset,
    schedule: TrainSchedule,
) -> Result<TrainOutcome> {
    train_from(Trainer::new(model, schedule, train.len())?, train, test)
}

/// Continues `trainer` to the end of its schedule; epoch metrics cover only the remaining steps.
pub fn train_from(
    mut trainer: Trainer,
    train: &LabeledDataset,
    test: &LabeledDataset,
) -> Result<TrainOutcome> {
    let per_epoch = trainer.iterations_per_epoch();
    let mut epochs = Vec::new();
    let (mut loss_sum, mut correct, mut seen) = (0.0, 0, 0);
    while !trainer.is_finished() {
        let m = trainer.step(train)?;
        loss_sum += m.loss * m.count as f64;
        correct += m.correct;
        seen += m.count;
        if trainer.iteration().is_multiple_of(per_epoch) || trainer.is_finished() {
            let bs = trainer.schedule.batch_size.max(256);
            let (test_loss, test_accuracy) =
                trainer.model.evaluate(&test.features, &test.labels, bs)?;
            epochs.push(EpochMetrics {
                epoch: trainer.iteration().div_ceil(per_epoch),
                iteration: trainer.iteration(),
                lr: m.lr,
                train_loss: loss_sum / seen as f64,
                train_accuracy: correct as f64 / seen as f64,
                test_loss,
                test_accuracy,
            });
            (loss_sum, correct, seen) = (0.0, 0, 0);
        }
    }
    let seed = trainer.schedule.seed;
    let bs = trainer.schedule.batch_size.max(256);
    let final_report = trainer.model.alignment_report(&train.features, bs, seed)?;
    Ok(TrainOutcome {
        trainer,
        epochs,
        final_report,
    })
}
