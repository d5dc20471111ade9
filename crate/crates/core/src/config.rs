//! Run configuration.
//!
//! The file format is flat `key = value` text; `#` starts a comment. Keys match the long CLI
//! flags with `-` replaced by `_`. Values are resolved defaults first, then the file, then flags.

use std::fmt;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::nn::{ActivationSpec, Granularity, PwluSpec};

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSpec {
    Spirals,
    /// Directory holding the four standard MNIST-style IDX files.
    Idx(PathBuf),
}

impl fmt::Display for DatasetSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DatasetSpec::Spirals => f.write_str("spirals"),
            DatasetSpec::Idx(p) => write!(f, "idx:{}", p.display()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActivationKind {
    Relu,
    Swish,
    Pwlu,
}

impl ActivationKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ActivationKind::Relu => "relu",
            ActivationKind::Swish => "swish",
            ActivationKind::Pwlu => "pwlu",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset: DatasetSpec,
    /// Hidden widths, e.g. `32,32`; `cK` adds a 3x3 conv with K channels.
    pub arch: String,
    pub activation: ActivationKind,
    pub n_intervals: usize,
    pub granularity: Granularity,
    pub half_width: f64,
    pub realign: bool,
    pub t_prime_epochs: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    pub pwlu_lr_multiplier: f64,
    /// Drives weight init, shuffling and reservoir sampling.
    pub seed: u64,
    /// Drives the spirals draw only, so model seeds can vary over a fixed dataset.
    pub data_seed: u64,
    pub spirals_train: usize,
    pub spirals_test: usize,
    pub spirals_noise: f64,
    pub spirals_turns: f64,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSpec::Spirals,
            arch: "32,32".into(),
            activation: ActivationKind::Pwlu,
            n_intervals: 16,
            granularity: Granularity::Channel,
            half_width: 3.0,
            realign: true,
            t_prime_epochs: 5,
            epochs: 40,
            lr: 0.05,
            batch_size: 32,
            momentum: 0.9,
            weight_decay: 1e-4,
            pwlu_lr_multiplier: 1.0,
            seed: 0,
            data_seed: 0,
            spirals_train: 500,
            spirals_test: 500,
            spirals_noise: 0.05,
            spirals_turns: crate::data::spirals::DEFAULT_TURNS,
            out: PathBuf::from("runs/default"),
        }
    }
}

pub const KEYS: &[&str] = &[
    "dataset",
    "arch",
    "activation",
    "n_intervals",
    "granularity",
    "half_width",
    "realign",
    "t_prime_epochs",
    "epochs",
    "lr",
    "batch_size",
    "momentum",
    "weight_decay",
    "pwlu_lr_multiplier",
    "seed",
    "data_seed",
    "spirals_train",
    "spirals_test",
    "spirals_noise",
    "spirals_turns",
    "out",
];

fn parse<T: std::str::FromStr>(field: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(field, format!("cannot parse `{value}`")))
}

impl RunConfig {
    /// Sets one field from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('-', "_");
        let value = value.trim();
        let k = key.as_str();
        match k {
            "dataset" => {
                self.dataset = if value == "spirals" {
                    DatasetSpec::Spirals
                } else if let Some(path) = value.strip_prefix("idx:").filter(|p| !p.is_empty()) {
                    DatasetSpec::Idx(PathBuf::from(path))
                } else {
                    return Err(Error::config(
                        k,
                        format!("expected `spirals` or `idx:PATH`, got `{value}`"),
                    ));
                }
            }
            "arch" => self.arch = value.to_string(),
            "activation" => {
                self.activation = match value {
                    "relu" => ActivationKind::Relu,
                    "swish" => ActivationKind::Swish,
                    "pwlu" => ActivationKind::Pwlu,
                    _ => {
                        return Err(Error::config(
                            k,
                            format!("expected relu, swish or pwlu, got `{value}`"),
                        ))
                    }
                }
            }
            "n_intervals" => self.n_intervals = parse(k, value)?,
            "granularity" => {
                self.granularity = Granularity::parse(value).ok_or_else(|| {
                    Error::config(k, format!("expected layer or channel, got `{value}`"))
                })?
            }
            "half_width" => self.half_width = parse(k, value)?,
            "realign" => {
                self.realign = match value {
                    "on" | "true" => true,
                    "off" | "false" => false,
                    _ => {
                        return Err(Error::config(
                            k,
                            format!("expected on or off, got `{value}`"),
                        ))
                    }
                }
            }
            "t_prime_epochs" => self.t_prime_epochs = parse(k, value)?,
            "epochs" => self.epochs = parse(k, value)?,
            "lr" => self.lr = parse(k, value)?,
            "batch_size" => self.batch_size = parse(k, value)?,
            "momentum" => self.momentum = parse(k, value)?,
            "weight_decay" => self.weight_decay = parse(k, value)?,
            "pwlu_lr_multiplier" => self.pwlu_lr_multiplier = parse(k, value)?,
            "seed" => self.seed = parse(k, value)?,
            "data_seed" => self.data_seed = parse(k, value)?,
            "spirals_train" => self.spirals_train = parse(k, value)?,
            "spirals_test" => self.spirals_test = parse(k, value)?,
            "spirals_noise" => self.spirals_noise = parse(k, value)?,
            "spirals_turns" => self.spirals_turns = parse(k, value)?,
            "out" => self.out = PathBuf::from(value),
            _ => return Err(Error::config(k, "unknown key")),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of the current values.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let mut seen = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::config(
                    "config",
                    format!("line {}: expected `key = value`", lineno + 1),
                )
            })?;
            let key = key.trim().replace('-', "_");
            if seen.contains(&key) {
                return Err(Error::config(&key, "set twice in config file"));
            }
            self.set(&key, value)?;
            seen.push(key);
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_text(&text)
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "dataset" => self.dataset.to_string(),
            "arch" => self.arch.clone(),
            "activation" => self.activation.as_str().into(),
            "n_intervals" => self.n_intervals.to_string(),
            "granularity" => self.granularity.as_str().into(),
            "half_width" => format!("{:?}", self.half_width),
            "realign" => (if self.realign { "on" } else { "off" }).into(),
            "t_prime_epochs" => self.t_prime_epochs.to_string(),
            "epochs" => self.epochs.to_string(),
            "lr" => format!("{:?}", self.lr),
            "batch_size" => self.batch_size.to_string(),
            "momentum" => format!("{:?}", self.momentum),
            "weight_decay" => format!("{:?}", self.weight_decay),
            "pwlu_lr_multiplier" => format!("{:?}", self.pwlu_lr_multiplier),
            "seed" => self.seed.to_string(),
            "data_seed" => self.data_seed.to_string(),
            "spirals_train" => self.spirals_train.to_string(),
            "spirals_test" => self.spirals_test.to_string(),
            "spirals_noise" => format!("{:?}", self.spirals_noise),
            "spirals_turns" => format!("{:?}", self.spirals_turns),
            "out" => self.out.display().to_string(),
            _ => return None,
        })
    }

    /// Resolved config in the file format; floats use round-trip formatting.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            out.push_str(key);
            out.push_str(" = ");
            out.push_str(&self.get(key).expect("listed key"));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    /// Realignment only applies to PWLU runs that train at all.
    pub fn realign_active(&self) -> bool {
        self.activation == ActivationKind::Pwlu && self.realign && self.epochs > 0
    }

    pub fn activation_spec(&self) -> ActivationSpec {
        match self.activation {
            ActivationKind::Relu => ActivationSpec::Relu,
            ActivationKind::Swish => ActivationSpec::Swish,
            ActivationKind::Pwlu => ActivationSpec::Pwlu(PwluSpec {
                n_intervals: self.n_intervals,
                granularity: self.granularity,
                half_width: self.half_width,
            }),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite_nonneg = |field: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::config(
                    field,
                    format!("must be finite and non-negative, got {v}"),
                ))
            }
        };
        let positive = |field: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::config(
                    field,
                    format!("must be finite and positive, got {v}"),
                ))
            }
        };
        let mut widths = 0;
        for tok in self.arch.split(',').map(str::trim) {
            let digits = tok.strip_prefix('c').unwrap_or(tok);
            match digits.parse::<usize>() {
                Ok(w) if w > 0 => widths += 1,
                _ => {
                    return Err(Error::config(
                        "arch",
                        format!("bad width `{tok}` in `{}`", self.arch),
                    ))
                }
            }
        }
        if widths == 0 {
            return Err(Error::config("arch", "no hidden layers"));
        }
        if self.n_intervals < 2 || !self.n_intervals.is_multiple_of(2) {
            return Err(Error::config(
                "n_intervals",
                format!("must be even and at least 2, got {}", self.n_intervals),
            ));
        }
        positive("half_width", self.half_width)?;
        if self.realign_active() && (self.t_prime_epochs == 0 || self.t_prime_epochs >= self.epochs)
        {
            return Err(Error::config(
                "t_prime_epochs",
                format!(
                    "must satisfy 0 < t_prime_epochs < epochs with realign on, got {} and epochs {}",
                    self.t_prime_epochs, self.epochs
                ),
            ));
        }
        positive("lr", self.lr)?;
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config(
                "momentum",
                format!("must be in [0, 1), got {}", self.momentum),
            ));
        }
        finite_nonneg("weight_decay", self.weight_decay)?;
        finite_nonneg("pwlu_lr_multiplier", self.pwlu_lr_multiplier)?;
        if self.dataset == DatasetSpec::Spirals {
            if self.spirals_train == 0 {
                return Err(Error::config("spirals_train", "must be positive"));
            }
            if self.spirals_test == 0 {
                return Err(Error::config("spirals_test", "must be positive"));
            }
            finite_nonneg("spirals_noise", self.spirals_noise)?;
            positive("spirals_turns", self.spirals_turns)?;
        }
        Ok(())
    }
}
