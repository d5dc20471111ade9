//! Training runs and sweeps driven by a [`RunConfig`], plus their on-disk outputs.

use std::fmt::Write as _;
use std::path::Path;

use crate::config::{DatasetSpec, RunConfig};
use crate::data::{load_idx_dir, spirals_split_with_turns, DataSplit};
use crate::error::{Error, Result};
use crate::nn::{
    metrics_csv, train_from, Model, ModelCheckpoint, ModelSpec, TrainOutcome, TrainSchedule,
    Trainer,
};

pub fn load_split(cfg: &RunConfig) -> Result<DataSplit> {
    match &cfg.dataset {
        DatasetSpec::Spirals => spirals_split_with_turns(
            cfg.spirals_train,
            cfg.spirals_test,
            cfg.spirals_noise,
            cfg.spirals_turns,
            cfg.data_seed,
        ),
        DatasetSpec::Idx(dir) => load_idx_dir(dir),
    }
}

pub fn build_model(cfg: &RunConfig, split: &DataSplit) -> Result<Model> {
    let classes = split.train.num_classes.max(split.test.num_classes);
    let spec = ModelSpec::from_arch(
        &cfg.arch,
        split.train.sample_shape(),
        classes,
        cfg.activation_spec(),
    )?;
    Model::new(spec, cfg.seed)
}

pub fn build_schedule(cfg: &RunConfig, n_train: usize) -> TrainSchedule {
    let realign_epochs = if cfg.realign_active() {
        cfg.t_prime_epochs
    } else {
        0
    };
    let mut s = TrainSchedule::from_epochs(
        cfg.epochs,
        realign_epochs,
        n_train,
        cfg.batch_size,
        cfg.lr,
        cfg.seed,
    );
    s.momentum = cfg.momentum;
    s.weight_decay = cfg.weight_decay;
    s.pwlu_lr_multiplier = cfg.pwlu_lr_multiplier;
    s
}

/// Validates `cfg`, loads the data and builds a trainer at iteration 0.
pub fn prepare(cfg: &RunConfig) -> Result<(DataSplit, Trainer)> {
    cfg.validate()?;
    let split = load_split(cfg)?;
    let model = build_model(cfg, &split)?;
    let schedule = build_schedule(cfg, split.train.len());
    let trainer = Trainer::new(model, schedule, split.train.len())?;
    Ok((split, trainer))
}

pub fn train(cfg: &RunConfig) -> Result<TrainOutcome> {
    let (split, trainer) = prepare(cfg)?;
    train_from(trainer, &split.train, &split.test)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `config.txt`, `checkpoint.bin`, `metrics.csv` and the alignment reports into `dir`.
pub fn write_outputs(cfg: &RunConfig, outcome: &TrainOutcome, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    cfg.write(&dir.join("config.txt"))?;
    ModelCheckpoint::from_trainer(&outcome.trainer).save(&dir.join("checkpoint.bin"))?;
    write_file(&dir.join("metrics.csv"), &metrics_csv(&outcome.epochs))?;
    let reports = outcome.reports();
    if let Some(r) = &reports.pre_reset {
        r.write_csv(&dir.join("alignment_pre_reset.csv"))?;
    }
    if let Some(r) = &reports.post_reset {
        r.write_csv(&dir.join("alignment_post_reset.csv"))?;
    }
    if !outcome.final_report.rows.is_empty() {
        outcome
            .final_report
            .write_csv(&dir.join("alignment_final.csv"))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub n_intervals: usize,
    /// Final test accuracy and train loss, or the error that stopped the run.
    pub result: std::result::Result<(f64, f64), String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
}

pub const SWEEP_CSV_HEADER: &str = "n_intervals,status,test_accuracy,train_loss,error";

impl SweepReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(SWEEP_CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = match &r.result {
                Ok((acc, loss)) => writeln!(out, "{},ok,{acc},{loss},", r.n_intervals),
                Err(e) => writeln!(
                    out,
                    "{},failed,,,\"{}\"",
                    r.n_intervals,
                    e.replace('"', "'")
                ),
            };
        }
        out
    }

    /// One column per interval count, test accuracy in percent.
    pub fn to_table(&self) -> String {
        let mut head = format!("{:<14}", "N");
        let mut acc = format!("{:<14}", "test acc (%)");
        for r in &self.rows {
            let _ = write!(head, "{:>9}", r.n_intervals);
            let _ = match &r.result {
                Ok((a, _)) => write!(acc, "{:>9.2}", 100.0 * a),
                Err(_) => write!(acc, "{:>9}", "failed"),
            };
        }
        format!("{head}\n{acc}\n")
    }
}

pub fn validate_n_list(n_list: &[usize]) -> Result<()> {
    if n_list.is_empty() {
        return Err(Error::config("n_list", "empty"));
    }
    for (i, &n) in n_list.iter().enumerate() {
        if n < 2 || n % 2 != 0 {
            return Err(Error::config(
                "n_list",
                format!("{n} is not even and at least 2"),
            ));
        }
        if n_list[..i].contains(&n) {
            return Err(Error::config("n_list", format!("duplicate value {n}")));
        }
    }
    Ok(())
}

/// Trains one model per interval count with everything else fixed. Each run writes its outputs
/// to `out/n{N}`; a failed run is recorded and the sweep moves on.
pub fn sweep(cfg: &RunConfig, n_list: &[usize], out: Option<&Path>) -> Result<SweepReport> {
    validate_n_list(n_list)?;
    if cfg.activation != crate::config::ActivationKind::Pwlu {
        return Err(Error::config("activation", "sweep requires pwlu"));
    }
    let mut report = SweepReport::default();
    for &n in n_list {
        let run_cfg = RunConfig {
            n_intervals: n,
            out: out
                .map(|o| o.join(format!("n{n}")))
                .unwrap_or_else(|| cfg.out.clone()),
            ..cfg.clone()
        };
        let result = train(&run_cfg).and_then(|outcome| {
            if let Some(dir) = out {
                write_outputs(&run_cfg, &outcome, &dir.join(format!("n{n}")))?;
            }
            let last = outcome
                .epochs
                .last()
                .ok_or_else(|| Error::Schedule("run finished without an epoch".into()))?;
            Ok((last.test_accuracy, last.train_loss))
        });
        if let Err(e) = &result {
            log::warn!("sweep run n_intervals={n} failed: {e}");
        }
        report.rows.push(SweepRow {
            n_intervals: n,
            result: result.map_err(|e| e.to_string()),
        });
    }
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        cfg.write(&dir.join("config.txt"))?;
        write_file(&dir.join("sweep.csv"), &report.to_csv())?;
    }
    Ok(report)
}
