use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use pwlu_core::bench::{run_bench, DEFAULT_ELEMENTS, DEFAULT_REPETITIONS};
use pwlu_core::config::RunConfig;
use pwlu_core::data::export::{export_shapes, DEFAULT_OUTER_POINTS, DEFAULT_POINTS_PER_INTERVAL};
use pwlu_core::nn::{init_pwlu_relu, ModelCheckpoint};
use pwlu_core::{run, Error, Result};

#[derive(Parser, Debug)]
#[command(
    name = "pwlu",
    version,
    about = "Piecewise linear unit training, sweeps, benchmarks and export"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train one model and write checkpoint, metrics and alignment reports.
    #[command(args_override_self = true, allow_negative_numbers = true)]
    Train(RunArgs),
    /// Train one PWLU model per interval count.
    #[command(args_override_self = true, allow_negative_numbers = true)]
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated even interval counts.
        #[arg(long, default_value = "4,8,12,16,20")]
        n_list: String,
    },
    /// Time ReLU, the reference kernel and the fused kernel.
    #[command(args_override_self = true, allow_negative_numbers = true)]
    Bench(BenchArgs),
    /// Write learned activation shapes from a checkpoint.
    #[command(args_override_self = true, allow_negative_numbers = true)]
    Export(ExportArgs),
}

/// Every value is kept as text and parsed by [`RunConfig::set`] so errors name the config field.
#[derive(Args, Debug, Default)]
pub struct RunArgs {
    /// Flat `key = value` file applied before the flags below.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// `spirals` or `idx:DIR`.
    #[arg(long)]
    pub dataset: Option<String>,
    /// Hidden widths, e.g. `32,32`; `cK` is a 3x3 conv with K channels.
    #[arg(long)]
    pub arch: Option<String>,
    /// relu, swish or pwlu.
    #[arg(long)]
    pub activation: Option<String>,
    #[arg(long)]
    pub n_intervals: Option<String>,
    /// layer or channel.
    #[arg(long)]
    pub granularity: Option<String>,
    /// on or off.
    #[arg(long)]
    pub realign: Option<String>,
    #[arg(long)]
    pub t_prime_epochs: Option<String>,
    #[arg(long)]
    pub half_width: Option<String>,
    #[arg(long)]
    pub epochs: Option<String>,
    #[arg(long)]
    pub lr: Option<String>,
    #[arg(long)]
    pub batch_size: Option<String>,
    #[arg(long)]
    pub momentum: Option<String>,
    #[arg(long)]
    pub weight_decay: Option<String>,
    #[arg(long)]
    pub pwlu_lr_multiplier: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    #[arg(long)]
    pub data_seed: Option<String>,
    #[arg(long)]
    pub spirals_train: Option<String>,
    #[arg(long)]
    pub spirals_test: Option<String>,
    #[arg(long)]
    pub spirals_noise: Option<String>,
    #[arg(long)]
    pub spirals_turns: Option<String>,
    #[arg(long)]
    pub out: Option<String>,
}

impl RunArgs {
    fn overrides(&self) -> Vec<(&'static str, &String)> {
        [
            ("dataset", &self.dataset),
            ("arch", &self.arch),
            ("activation", &self.activation),
            ("n_intervals", &self.n_intervals),
            ("granularity", &self.granularity),
            ("realign", &self.realign),
            ("t_prime_epochs", &self.t_prime_epochs),
            ("half_width", &self.half_width),
            ("epochs", &self.epochs),
            ("lr", &self.lr),
            ("batch_size", &self.batch_size),
            ("momentum", &self.momentum),
            ("weight_decay", &self.weight_decay),
            ("pwlu_lr_multiplier", &self.pwlu_lr_multiplier),
            ("seed", &self.seed),
            ("data_seed", &self.data_seed),
            ("spirals_train", &self.spirals_train),
            ("spirals_test", &self.spirals_test),
            ("spirals_noise", &self.spirals_noise),
            ("spirals_turns", &self.spirals_turns),
            ("out", &self.out),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.as_ref().map(|v| (k, v)))
        .collect()
    }

    /// Defaults, then the config file, then flags.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        for (k, v) in self.overrides() {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Use the first PWLU unit of this checkpoint instead of a synthetic ReLU-initialized unit.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 16)]
    pub n_intervals: usize,
    #[arg(long, default_value_t = 3.0)]
    pub half_width: f64,
    #[arg(long, default_value_t = DEFAULT_ELEMENTS)]
    pub elements: usize,
    #[arg(long, default_value_t = DEFAULT_REPETITIONS)]
    pub repetitions: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write `bench.csv` here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ExportArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_POINTS_PER_INTERVAL)]
    pub points_per_interval: usize,
    #[arg(long, default_value_t = DEFAULT_OUTER_POINTS)]
    pub outer_points: usize,
}

fn parse_n_list(text: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse()
                .map_err(|_| Error::config("n_list", format!("bad interval count `{t}`")))
        })
        .collect()
}

fn cmd_train(args: &RunArgs) -> Result<()> {
    let cfg = args.resolve()?;
    let outcome = run::train(&cfg)?;
    run::write_outputs(&cfg, &outcome, &cfg.out)?;
    let summary = json!({
        "status": "ok",
        "out": cfg.out.display().to_string(),
        "iterations": outcome.trainer.iteration(),
        "test_accuracy": outcome.final_test_accuracy(),
        "final_mean_iou": outcome.final_report.mean_iou(),
    });
    println!("{summary}");
    Ok(())
}

fn cmd_sweep(args: &RunArgs, n_list: &str) -> Result<()> {
    let cfg = args.resolve()?;
    let n_list = parse_n_list(n_list)?;
    let report = run::sweep(&cfg, &n_list, Some(&cfg.out))?;
    print!("{}", report.to_table());
    Ok(())
}

fn cmd_bench(args: &BenchArgs) -> Result<()> {
    let params = match &args.checkpoint {
        Some(path) => {
            let trainer = ModelCheckpoint::load(path)?.into_trainer()?;
            let unit = trainer
                .model
                .pwlu_layers()
                .next()
                .map(|(_, layer)| layer.units[0].clone());
            unit.ok_or_else(|| Error::Checkpoint(format!("{} has no pwlu layer", path.display())))?
        }
        None => init_pwlu_relu(args.n_intervals, args.half_width)?,
    };
    let report = run_bench(&params, args.elements, args.repetitions, args.seed)?;
    print!("{}", report.to_table());
    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("bench.csv");
        std::fs::write(&path, report.to_csv()).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

fn cmd_export(args: &ExportArgs) -> Result<()> {
    let trainer = ModelCheckpoint::load(&args.checkpoint)?.into_trainer()?;
    let export = export_shapes(
        &trainer.model,
        &args.out,
        args.points_per_interval,
        args.outer_points,
    )?;
    let summary = json!({
        "status": "ok",
        "units": export.units.len(),
        "shapes": Path::new(&args.out).join("shapes.csv").display().to_string(),
    });
    println!("{summary}");
    Ok(())
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Sweep { run, n_list } => cmd_sweep(run, n_list),
        Command::Bench(args) => cmd_bench(args),
        Command::Export(args) => cmd_export(args),
    }
}

/// One JSON object per line, e.g. `{"error":"invalid_config","field":"epochs","message":"..."}`.
pub fn error_line(e: &Error) -> String {
    let mut v = json!({ "error": e.kind(), "message": e.to_string() });
    if let Error::InvalidConfig { field, .. } = e {
        v["field"] = json!(field);
    }
    v.to_string()
}
