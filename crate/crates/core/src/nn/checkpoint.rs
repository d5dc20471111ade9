//! Binary checkpoint of a [`Trainer`].
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes  "PWLUCKPT"
//! version  u32      1
//! count    u32      number of records
//! record*  name_len u16, name (UTF-8), tag u8, len u64, payload
//!          tag 1: len f64 values, tag 2: len u64 values, tag 3: len bytes of UTF-8 text
//! ```
//!
//! Records appear in this order:
//!
//! | name | tag | contents |
//! |------|-----|----------|
//! | `manifest` | 3 | layer manifest ([`ModelSpec::to_manifest`]) |
//! | `schedule.u64` | 2 | total_iterations, realign_iteration, batch_size, seed |
//! | `schedule.f64` | 1 | base_lr, momentum, weight_decay, pwlu_lr_multiplier, warmup_fraction |
//! | `trainer.u64` | 2 | iteration, n_train |
//! | `rng.u64` | 2 | shuffle seed, shuffle stream (current epoch) |
//! | `layer{i}.weight`, `.bias`, `.weight_velocity`, `.bias_velocity` | 1 | dense/conv layer `i` |
//! | `layer{i}.pwlu.u64` | 2 | frozen, collecting, unit count |
//! | `layer{i}.unit{u}.params` | 1 | B_L, B_R, K_L, K_R, Y_0..Y_N |
//! | `layer{i}.unit{u}.velocity` | 1 | same layout as params |
//! | `layer{i}.unit{u}.stats.f64` | 1 | mean, std, momentum |
//! | `layer{i}.unit{u}.stats.u64` | 2 | update_count |
//! | `layer{i}.unit{u}.reservoir.u64` | 2 | capacity, seed, seen, word_pos low, word_pos high |
//! | `layer{i}.unit{u}.reservoir.samples` | 1 | retained samples |
//! | `report.pre_reset`, `report.post_reset` | 3 | alignment CSV, present after realignment |

use std::path::Path;

use super::model::{Layer, Model, ModelSpec};
use super::schedule::{LrCurve, TrainSchedule};
use super::trainer::{RealignReports, Trainer};
use crate::error::{Error, Result};
use crate::stats::{AlignmentReport, Reservoir, RunningStats};

pub const MAGIC: &[u8; 8] = b"PWLUCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Record {
    F64(Vec<f64>),
    U64(Vec<u64>),
    Text(String),
}

impl Record {
    fn tag(&self) -> u8 {
        match self {
            Record::F64(_) => 1,
            Record::U64(_) => 2,
            Record::Text(_) => 3,
        }
    }
}

/// Ordered named records; see the module docs for the layout.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModelCheckpoint {
    pub records: Vec<(String, Record)>,
}

impl ModelCheckpoint {
    fn push(&mut self, name: impl Into<String>, r: Record) {
        self.records.push((name.into(), r));
    }

    pub fn get(&self, name: &str) -> Option<&Record> {
        self.records.iter().find(|(n, _)| n == name).map(|(_, r)| r)
    }

    fn f64s(&self, name: &str) -> Result<&[f64]> {
        match self.get(name) {
            Some(Record::F64(v)) => Ok(v),
            _ => Err(Error::Checkpoint(format!("missing f64 record `{name}`"))),
        }
    }

    fn u64s(&self, name: &str) -> Result<&[u64]> {
        match self.get(name) {
            Some(Record::U64(v)) => Ok(v),
            _ => Err(Error::Checkpoint(format!("missing u64 record `{name}`"))),
        }
    }

    fn text(&self, name: &str) -> Result<&str> {
        match self.get(name) {
            Some(Record::Text(v)) => Ok(v),
            _ => Err(Error::Checkpoint(format!("missing text record `{name}`"))),
        }
    }

    fn fixed<const N: usize, T: Copy>(v: &[T], name: &str) -> Result<[T; N]> {
        v.try_into().map_err(|_| {
            Error::Checkpoint(format!(
                "record `{name}` has {} values, expected {N}",
                v.len()
            ))
        })
    }

    pub fn from_trainer(trainer: &Trainer) -> Self {
        let mut c = Self::default();
        let s = &trainer.schedule;
        c.push("manifest", Record::Text(trainer.model.spec.to_manifest()));
        c.push(
            "schedule.u64",
            Record::U64(vec![
                s.total_iterations as u64,
                s.realign_iteration as u64,
                s.batch_size as u64,
                s.seed,
            ]),
        );
        c.push(
            "schedule.f64",
            Record::F64(vec![
                s.base_lr,
                s.momentum,
                s.weight_decay,
                s.pwlu_lr_multiplier,
                s.lr_curve.warmup_fraction,
            ]),
        );
        c.push(
            "trainer.u64",
            Record::U64(vec![trainer.iteration() as u64, trainer.n_train() as u64]),
        );
        let (seed, stream) = trainer.rng_state();
        c.push("rng.u64", Record::U64(vec![seed, stream]));
        for (i, layer) in trainer.model.layers.iter().enumerate() {
            let (w, b, vw, vb) = match layer {
                Layer::Dense(d) => (&d.weight, &d.bias, &d.vel_weight, &d.vel_bias),
                Layer::Conv2d(cv) => (&cv.weight, &cv.bias, &cv.vel_weight, &cv.vel_bias),
                Layer::Pwlu(p) => {
                    c.push(
                        format!("layer{i}.pwlu.u64"),
                        Record::U64(vec![
                            p.frozen as u64,
                            p.collecting as u64,
                            p.units.len() as u64,
                        ]),
                    );
                    for (u, unit) in p.units.iter().enumerate() {
                        let pre = format!("layer{i}.unit{u}");
                        let mut packed = Vec::new();
                        unit.write_trainable(&mut packed);
                        c.push(format!("{pre}.params"), Record::F64(packed));
                        c.push(
                            format!("{pre}.velocity"),
                            Record::F64(p.velocities[u].clone()),
                        );
                        let st = &p.stats[u];
                        c.push(
                            format!("{pre}.stats.f64"),
                            Record::F64(vec![st.mean, st.std, st.momentum]),
                        );
                        c.push(
                            format!("{pre}.stats.u64"),
                            Record::U64(vec![st.update_count]),
                        );
                        let r = &p.reservoirs[u];
                        let wp = r.word_pos();
                        c.push(
                            format!("{pre}.reservoir.u64"),
                            Record::U64(vec![
                                r.capacity() as u64,
                                r.seed(),
                                r.seen(),
                                wp as u64,
                                (wp >> 64) as u64,
                            ]),
                        );
                        c.push(
                            format!("{pre}.reservoir.samples"),
                            Record::F64(r.samples().to_vec()),
                        );
                    }
                    continue;
                }
                Layer::Flatten { .. } | Layer::Fixed(_) => continue,
            };
            c.push(format!("layer{i}.weight"), Record::F64(w.clone()));
            c.push(format!("layer{i}.bias"), Record::F64(b.clone()));
            c.push(format!("layer{i}.weight_velocity"), Record::F64(vw.clone()));
            c.push(format!("layer{i}.bias_velocity"), Record::F64(vb.clone()));
        }
        if let Some(r) = &trainer.reports.pre_reset {
            c.push("report.pre_reset", Record::Text(r.to_csv()));
        }
        if let Some(r) = &trainer.reports.post_reset {
            c.push("report.post_reset", Record::Text(r.to_csv()));
        }
        c
    }

    pub fn into_trainer(&self) -> Result<Trainer> {
        let spec = ModelSpec::from_manifest(self.text("manifest")?)?;
        let [total, realign, batch, seed] =
            Self::fixed(self.u64s("schedule.u64")?, "schedule.u64")?;
        let [base_lr, momentum, weight_decay, pwlu_mult, warmup] =
            Self::fixed(self.f64s("schedule.f64")?, "schedule.f64")?;
        let schedule = TrainSchedule {
            total_iterations: total as usize,
            realign_iteration: realign as usize,
            batch_size: batch as usize,
            base_lr,
            momentum,
            weight_decay,
            pwlu_lr_multiplier: pwlu_mult,
            lr_curve: LrCurve {
                warmup_fraction: warmup,
            },
            seed,
        };
        schedule.validate()?;
        let [iteration, n_train] = Self::fixed(self.u64s("trainer.u64")?, "trainer.u64")?;
        let mut model = Model::new(spec, seed)?;
        let copy = |dst: &mut Vec<f64>, name: String| -> Result<()> {
            let src = self.f64s(&name)?;
            if src.len() != dst.len() {
                return Err(Error::Checkpoint(format!(
                    "record `{name}` has wrong length"
                )));
            }
            dst.copy_from_slice(src);
            Ok(())
        };
        for (i, layer) in model.layers.iter_mut().enumerate() {
            match layer {
                Layer::Dense(d) => {
                    copy(&mut d.weight, format!("layer{i}.weight"))?;
                    copy(&mut d.bias, format!("layer{i}.bias"))?;
                    copy(&mut d.vel_weight, format!("layer{i}.weight_velocity"))?;
                    copy(&mut d.vel_bias, format!("layer{i}.bias_velocity"))?;
                }
                Layer::Conv2d(cv) => {
                    copy(&mut cv.weight, format!("layer{i}.weight"))?;
                    copy(&mut cv.bias, format!("layer{i}.bias"))?;
                    copy(&mut cv.vel_weight, format!("layer{i}.weight_velocity"))?;
                    copy(&mut cv.vel_bias, format!("layer{i}.bias_velocity"))?;
                }
                Layer::Pwlu(p) => {
                    let name = format!("layer{i}.pwlu.u64");
                    let [frozen, collecting, n_units] = Self::fixed(self.u64s(&name)?, &name)?;
                    if n_units as usize != p.units.len() {
                        return Err(Error::Checkpoint(format!("`{name}` unit count mismatch")));
                    }
                    p.frozen = frozen != 0;
                    p.collecting = collecting != 0;
                    for u in 0..p.units.len() {
                        let pre = format!("layer{i}.unit{u}");
                        p.units[u].read_trainable(self.f64s(&format!("{pre}.params"))?)?;
                        copy(&mut p.velocities[u], format!("{pre}.velocity"))?;
                        let n = format!("{pre}.stats.f64");
                        let [mean, std, momentum] = Self::fixed(self.f64s(&n)?, &n)?;
                        let n = format!("{pre}.stats.u64");
                        let [update_count] = Self::fixed(self.u64s(&n)?, &n)?;
                        p.stats[u] = RunningStats {
                            mean,
                            std,
                            update_count,
                            momentum,
                        };
                        let n = format!("{pre}.reservoir.u64");
                        let [cap, rseed, seen, lo, hi] = Self::fixed(self.u64s(&n)?, &n)?;
                        let samples = self.f64s(&format!("{pre}.reservoir.samples"))?.to_vec();
                        p.reservoirs[u] = Reservoir::from_parts(
                            cap as usize,
                            rseed,
                            (lo as u128) | ((hi as u128) << 64),
                            seen,
                            samples,
                        );
                    }
                }
                Layer::Flatten { .. } | Layer::Fixed(_) => {}
            }
        }
        let report = |name: &str| -> Result<Option<AlignmentReport>> {
            match self.get(name) {
                Some(Record::Text(t)) => Ok(Some(AlignmentReport::parse_csv(t)?)),
                Some(_) => Err(Error::Checkpoint(format!("record `{name}` is not text"))),
                None => Ok(None),
            }
        };
        let reports = RealignReports {
            pre_reset: report("report.pre_reset")?,
            post_reset: report("report.post_reset")?,
        };
        Ok(Trainer::restore(
            model,
            schedule,
            n_train as usize,
            iteration as usize,
            reports,
        ))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.records.len() as u32).to_le_bytes());
        for (name, rec) in &self.records {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(rec.tag());
            match rec {
                Record::F64(v) => {
                    out.extend_from_slice(&(v.len() as u64).to_le_bytes());
                    v.iter()
                        .for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
                }
                Record::U64(v) => {
                    out.extend_from_slice(&(v.len() as u64).to_le_bytes());
                    v.iter()
                        .for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
                }
                Record::Text(t) => {
                    out.extend_from_slice(&(t.len() as u64).to_le_bytes());
                    out.extend_from_slice(t.as_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let count = r.u32()?;
        let mut c = Self::default();
        for _ in 0..count {
            let name_len = u16::from_le_bytes(r.take(2)?.try_into().unwrap()) as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| Error::Checkpoint("record name is not UTF-8".into()))?
                .to_string();
            let tag = r.take(1)?[0];
            let len = r.u64()? as usize;
            let rec = match tag {
                1 => Record::F64(r.words(len)?.map(f64::from_le_bytes).collect()),
                2 => Record::U64(r.words(len)?.map(u64::from_le_bytes).collect()),
                3 => Record::Text(
                    std::str::from_utf8(r.take(len)?)
                        .map_err(|_| Error::Checkpoint(format!("record `{name}` is not UTF-8")))?
                        .to_string(),
                ),
                t => return Err(Error::Checkpoint(format!("unknown tag {t} in `{name}`"))),
            };
            c.records.push((name, rec));
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint("trailing bytes".into()));
        }
        Ok(c)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint("truncated checkpoint".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn words(&mut self, n: usize) -> Result<impl Iterator<Item = [u8; 8]> + 'a> {
        let bytes = self.take(
            n.checked_mul(8)
                .ok_or_else(|| Error::Checkpoint("length overflow".into()))?,
        )?;
        Ok(bytes.chunks_exact(8).map(|c| c.try_into().unwrap()))
    }
}
