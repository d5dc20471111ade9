use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::activation::{FixedActivation, FixedKind};
use super::conv::{Conv2d, ConvGeometry};
use super::dense::Dense;
use super::loss::{softmax_xent, XentOutput};
use super::optim::Sgd;
use super::pwlu_layer::{init_pwlu_relu, Granularity, PwluLayer};
use crate::error::{Error, Result};
use crate::stats::{AlignmentReport, Reservoir, DEFAULT_CAPACITY};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PwluSpec {
    pub n_intervals: usize,
    pub granularity: Granularity,
    pub half_width: f64,
}

impl Default for PwluSpec {
    fn default() -> Self {
        Self {
            n_intervals: 16,
            granularity: Granularity::Channel,
            half_width: 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActivationSpec {
    Relu,
    Swish,
    Pwlu(PwluSpec),
}

impl ActivationSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ActivationSpec::Relu => "relu",
            ActivationSpec::Swish => "swish",
            ActivationSpec::Pwlu(_) => "pwlu",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    Dense {
        out: usize,
    },
    Conv2d {
        out_channels: usize,
        kernel: usize,
        padding: usize,
    },
    Flatten,
    Activation(ActivationSpec),
}

/// Architecture description; also the layer manifest stored in checkpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    /// Per-sample input shape: `[features]` or `[channels, height, width]`.
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
}

impl ModelSpec {
    /// Parses a comma-separated width list such as `32,32` or `c8,c8,64` (`cK` is a 3x3 conv
    /// with K channels) and appends the output layer. An activation follows every layer except
    /// the output layer.
    pub fn from_arch(
        arch: &str,
        input_shape: &[usize],
        classes: usize,
        act: ActivationSpec,
    ) -> Result<Self> {
        let mut layers = Vec::new();
        let mut spatial = input_shape.len() == 3;
        for tok in arch.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            if let Some(ch) = tok.strip_prefix('c') {
                if !spatial {
                    return Err(Error::config(
                        "arch",
                        format!("conv layer `{tok}` after flattening"),
                    ));
                }
                let out_channels = ch
                    .parse()
                    .map_err(|_| Error::config("arch", format!("bad conv width `{tok}`")))?;
                layers.push(LayerSpec::Conv2d {
                    out_channels,
                    kernel: 3,
                    padding: 1,
                });
            } else {
                let out: usize = tok
                    .parse()
                    .map_err(|_| Error::config("arch", format!("bad width `{tok}`")))?;
                if spatial {
                    layers.push(LayerSpec::Flatten);
                    spatial = false;
                }
                layers.push(LayerSpec::Dense { out });
            }
            layers.push(LayerSpec::Activation(act));
        }
        if spatial {
            layers.push(LayerSpec::Flatten);
        }
        layers.push(LayerSpec::Dense { out: classes });
        let spec = Self {
            input_shape: input_shape.to_vec(),
            layers,
        };
        spec.output_shape()?;
        Ok(spec)
    }

    pub fn mlp(input_dim: usize, hidden: &[usize], classes: usize, act: ActivationSpec) -> Self {
        let mut layers = Vec::new();
        for &h in hidden {
            layers.push(LayerSpec::Dense { out: h });
            layers.push(LayerSpec::Activation(act));
        }
        layers.push(LayerSpec::Dense { out: classes });
        Self {
            input_shape: vec![input_dim],
            layers,
        }
    }

    /// Per-sample output shape of every layer.
    pub fn shapes(&self) -> Result<Vec<Vec<usize>>> {
        let mut shape = self.input_shape.clone();
        let mut out = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let bad = |msg: &str| Error::config("arch", format!("layer {i}: {msg}"));
            shape = match layer {
                LayerSpec::Dense { out } => {
                    if shape.len() != 1 {
                        return Err(bad("dense layer needs flat input"));
                    }
                    if *out == 0 {
                        return Err(bad("zero width"));
                    }
                    vec![*out]
                }
                LayerSpec::Conv2d {
                    out_channels,
                    kernel,
                    padding,
                } => {
                    if shape.len() != 3 {
                        return Err(bad("conv layer needs [C, H, W] input"));
                    }
                    let g = ConvGeometry {
                        in_channels: shape[0],
                        out_channels: *out_channels,
                        kernel: *kernel,
                        padding: *padding,
                    };
                    let (h, w) = g
                        .output_hw(shape[1], shape[2])
                        .ok_or_else(|| bad("kernel larger than input"))?;
                    vec![*out_channels, h, w]
                }
                LayerSpec::Flatten => vec![shape.iter().product()],
                LayerSpec::Activation(_) => shape,
            };
            out.push(shape.clone());
        }
        Ok(out)
    }

    pub fn output_shape(&self) -> Result<Vec<usize>> {
        Ok(self
            .shapes()?
            .pop()
            .unwrap_or_else(|| self.input_shape.clone()))
    }

    /// Text manifest, one layer per line after an `input` line.
    pub fn to_manifest(&self) -> String {
        let dims = |v: &[usize]| {
            v.iter()
                .map(|d| d.to_string())
                .collect::<Vec<_>>()
                .join("x")
        };
        let mut out = format!("input {}\n", dims(&self.input_shape));
        for l in &self.layers {
            let line = match l {
                LayerSpec::Dense { out } => format!("dense out={out}"),
                LayerSpec::Conv2d {
                    out_channels,
                    kernel,
                    padding,
                } => {
                    format!("conv2d out={out_channels} kernel={kernel} padding={padding}")
                }
                LayerSpec::Flatten => "flatten".to_string(),
                LayerSpec::Activation(ActivationSpec::Relu) => "relu".to_string(),
                LayerSpec::Activation(ActivationSpec::Swish) => "swish".to_string(),
                LayerSpec::Activation(ActivationSpec::Pwlu(p)) => format!(
                    "pwlu n_intervals={} granularity={} half_width={:?}",
                    p.n_intervals,
                    p.granularity.as_str(),
                    p.half_width
                ),
            };
            out.push_str(&line);
            out.push('\n');
        }
        out
    }

    pub fn from_manifest(text: &str) -> Result<Self> {
        let bad = |line: &str| Error::Checkpoint(format!("bad manifest line `{line}`"));
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let first = lines
            .next()
            .ok_or_else(|| Error::Checkpoint("empty manifest".into()))?;
        let dims = first.strip_prefix("input ").ok_or_else(|| bad(first))?;
        let input_shape = dims
            .split('x')
            .map(|d| d.parse::<usize>().map_err(|_| bad(first)))
            .collect::<Result<Vec<_>>>()?;
        let mut layers = Vec::new();
        for line in lines {
            let mut parts = line.split_whitespace();
            let kind = parts.next().ok_or_else(|| bad(line))?;
            let mut kv = std::collections::BTreeMap::new();
            for p in parts {
                let (k, v) = p.split_once('=').ok_or_else(|| bad(line))?;
                kv.insert(k, v);
            }
            let get = |k: &str| kv.get(k).copied().ok_or_else(|| bad(line));
            let num = |k: &str| get(k)?.parse::<usize>().map_err(|_| bad(line));
            layers.push(match kind {
                "dense" => LayerSpec::Dense { out: num("out")? },
                "conv2d" => LayerSpec::Conv2d {
                    out_channels: num("out")?,
                    kernel: num("kernel")?,
                    padding: num("padding")?,
                },
                "flatten" => LayerSpec::Flatten,
                "relu" => LayerSpec::Activation(ActivationSpec::Relu),
                "swish" => LayerSpec::Activation(ActivationSpec::Swish),
                "pwlu" => LayerSpec::Activation(ActivationSpec::Pwlu(PwluSpec {
                    n_intervals: num("n_intervals")?,
                    granularity: Granularity::parse(get("granularity")?)
                        .ok_or_else(|| bad(line))?,
                    half_width: get("half_width")?.parse().map_err(|_| bad(line))?,
                })),
                _ => return Err(bad(line)),
            });
        }
        Ok(Self {
            input_shape,
            layers,
        })
    }
}

#[derive(Debug, Clone)]
pub enum Layer {
    Dense(Dense),
    Conv2d(Conv2d),
    Flatten { input_shape: Option<Vec<usize>> },
    Fixed(FixedActivation),
    Pwlu(PwluLayer),
}

impl Layer {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Dense(_) => "dense",
            Layer::Conv2d(_) => "conv",
            Layer::Flatten { .. } => "flatten",
            Layer::Fixed(a) => match a.kind {
                FixedKind::Relu => "relu",
                FixedKind::Swish => "swish",
            },
            Layer::Pwlu(_) => "pwlu",
        }
    }
}

/// Sequential network.
#[derive(Debug, Clone)]
pub struct Model {
    pub spec: ModelSpec,
    pub layers: Vec<Layer>,
}

impl Model {
    /// Builds the network with He-normal weights drawn from `seed`. PWLU layers start in ReLU
    /// form on `[-half_width, half_width]`.
    pub fn new(spec: ModelSpec, seed: u64) -> Result<Self> {
        let shapes = spec.shapes()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(spec.layers.len());
        let mut in_shape = spec.input_shape.clone();
        for (i, (ls, out_shape)) in spec.layers.iter().zip(&shapes).enumerate() {
            layers.push(match ls {
                LayerSpec::Dense { out } => Layer::Dense(Dense::init(in_shape[0], *out, &mut rng)),
                LayerSpec::Conv2d {
                    out_channels,
                    kernel,
                    padding,
                } => Layer::Conv2d(Conv2d::init(
                    ConvGeometry {
                        in_channels: in_shape[0],
                        out_channels: *out_channels,
                        kernel: *kernel,
                        padding: *padding,
                    },
                    &mut rng,
                )),
                LayerSpec::Flatten => Layer::Flatten { input_shape: None },
                LayerSpec::Activation(ActivationSpec::Relu) => {
                    Layer::Fixed(FixedActivation::new(FixedKind::Relu))
                }
                LayerSpec::Activation(ActivationSpec::Swish) => {
                    Layer::Fixed(FixedActivation::new(FixedKind::Swish))
                }
                LayerSpec::Activation(ActivationSpec::Pwlu(p)) => Layer::Pwlu(PwluLayer::new(
                    p.granularity,
                    in_shape[0],
                    init_pwlu_relu(p.n_intervals, p.half_width)?,
                    DEFAULT_CAPACITY,
                    reservoir_seed(seed, i),
                )),
            });
            in_shape = out_shape.clone();
        }
        Ok(Self { spec, layers })
    }

    pub fn layer_name(&self, i: usize) -> String {
        format!("{}{}", self.layers[i].kind(), i)
    }

    fn batch_input_shape(&self, x: &Tensor) -> Result<()> {
        if x.shape().len() != self.spec.input_shape.len() + 1
            || x.shape()[1..] != self.spec.input_shape[..]
        {
            let mut expected = vec![x.shape().first().copied().unwrap_or(0)];
            expected.extend(&self.spec.input_shape);
            return Err(Error::ShapeMismatch {
                expected,
                actual: x.shape().to_vec(),
            });
        }
        Ok(())
    }

    /// Forward pass. In training mode inputs are cached for [`backward`](Self::backward) and
    /// collecting PWLU layers update their statistics.
    pub fn forward(&mut self, x: &Tensor, train: bool) -> Result<Tensor> {
        self.batch_input_shape(x)?;
        let mut h = x.clone();
        for layer in &mut self.layers {
            h = match layer {
                Layer::Dense(d) => d.forward(&h)?,
                Layer::Conv2d(c) => c.forward(&h)?,
                Layer::Flatten { input_shape } => {
                    let b = h.shape()[0];
                    let rest: usize = h.shape()[1..].iter().product();
                    *input_shape = Some(h.shape().to_vec());
                    h.reshape(vec![b, rest])?
                }
                Layer::Fixed(a) => a.forward(&h, train),
                Layer::Pwlu(p) => p.forward(&h, train)?,
            };
        }
        Ok(h)
    }

    pub fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor> {
        let mut g = grad_output.clone();
        for layer in self.layers.iter_mut().rev() {
            g = match layer {
                Layer::Dense(d) => d.backward(&g)?,
                Layer::Conv2d(c) => c.backward(&g)?,
                Layer::Flatten { input_shape } => {
                    let shape = input_shape.clone().ok_or_else(|| {
                        Error::Checkpoint("flatten backward before forward".into())
                    })?;
                    g.reshape(shape)?
                }
                Layer::Fixed(a) => a.backward(&g)?,
                Layer::Pwlu(p) => p.backward(&g)?,
            };
        }
        Ok(g)
    }

    /// Forward, loss and backward for one batch; parameter gradients are left in the layers.
    pub fn loss_and_grads(&mut self, x: &Tensor, labels: &[usize]) -> Result<XentOutput> {
        let logits = self.forward(x, true)?;
        let out = softmax_xent(&logits, labels)?;
        if out.loss.is_finite() {
            self.backward(&out.grad)?;
        }
        Ok(out)
    }

    /// Name of the first layer whose cached output contains a non-finite value.
    pub fn first_non_finite_layer(&self, logits: Option<&Tensor>) -> String {
        for i in 0..self.layers.len() {
            let output = match self.layers.get(i + 1) {
                Some(next) => cached_input(next),
                None => logits,
            };
            if let Some(t) = output {
                if !t.all_finite() {
                    return self.layer_name(i);
                }
            }
        }
        "loss".to_string()
    }

    pub fn sgd_step(&mut self, sgd: &Sgd, lr: f64, pwlu_lr: f64) -> Result<()> {
        for layer in &mut self.layers {
            match layer {
                Layer::Dense(d) => {
                    sgd.step(&mut d.weight, &d.grad_weight, &mut d.vel_weight, lr, true);
                    sgd.step(&mut d.bias, &d.grad_bias, &mut d.vel_bias, lr, true);
                }
                Layer::Conv2d(c) => {
                    sgd.step(&mut c.weight, &c.grad_weight, &mut c.vel_weight, lr, true);
                    sgd.step(&mut c.bias, &c.grad_bias, &mut c.vel_bias, lr, true);
                }
                Layer::Pwlu(p) => p.sgd_step(sgd, pwlu_lr)?,
                Layer::Flatten { .. } | Layer::Fixed(_) => {}
            }
        }
        Ok(())
    }

    pub fn pwlu_layers(&self) -> impl Iterator<Item = (usize, &PwluLayer)> {
        self.layers.iter().enumerate().filter_map(|(i, l)| match l {
            Layer::Pwlu(p) => Some((i, p)),
            _ => None,
        })
    }

    pub fn pwlu_layers_mut(&mut self) -> impl Iterator<Item = (usize, &mut PwluLayer)> {
        self.layers
            .iter_mut()
            .enumerate()
            .filter_map(|(i, l)| match l {
                Layer::Pwlu(p) => Some((i, p)),
                _ => None,
            })
    }

    /// Mean loss and accuracy over a dataset, evaluated in batches without side effects on
    /// statistics.
    pub fn evaluate(
        &mut self,
        features: &Tensor,
        labels: &[usize],
        batch_size: usize,
    ) -> Result<(f64, f64)> {
        let n = labels.len();
        if n == 0 {
            return Err(Error::EmptyBatch);
        }
        let (mut loss, mut correct) = (0.0, 0);
        let idx: Vec<usize> = (0..n).collect();
        for chunk in idx.chunks(batch_size.max(1)) {
            let x = features.select_rows(chunk);
            let lab: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let out = softmax_xent(&self.forward(&x, false)?, &lab)?;
            loss += out.loss * chunk.len() as f64;
            correct += out.correct;
        }
        Ok((loss / n as f64, correct as f64 / n as f64))
    }

    /// Passes `features` through the network and reports, per PWLU unit, how its boundaries
    /// align with the `[p5, p95]` interval of the inputs it receives.
    pub fn alignment_report(
        &mut self,
        features: &Tensor,
        batch_size: usize,
        seed: u64,
    ) -> Result<AlignmentReport> {
        let mut reservoirs: Vec<Vec<Reservoir>> = self
            .layers
            .iter()
            .enumerate()
            .map(|(i, l)| match l {
                Layer::Pwlu(p) => (0..p.units.len())
                    .map(|u| {
                        Reservoir::new(
                            DEFAULT_CAPACITY,
                            reservoir_seed(seed, i).wrapping_add(u as u64),
                        )
                    })
                    .collect(),
                _ => Vec::new(),
            })
            .collect();
        let idx: Vec<usize> = (0..features.shape()[0]).collect();
        for chunk in idx.chunks(batch_size.max(1)) {
            let mut h = features.select_rows(chunk);
            for (layer, res) in self.layers.iter_mut().zip(&mut reservoirs) {
                if let Layer::Pwlu(p) = layer {
                    for (bucket, r) in p.split_by_unit(&h)?.into_iter().zip(res.iter_mut()) {
                        r.extend(bucket);
                    }
                }
                h = match layer {
                    Layer::Dense(d) => {
                        super::dense::dense_forward(&h, &d.weight, &d.bias, d.in_dim, d.out_dim)?
                    }
                    Layer::Conv2d(c) => {
                        super::conv::conv2d_forward(&h, &c.weight, &c.bias, &c.geometry)?
                    }
                    Layer::Flatten { .. } => {
                        let b = h.shape()[0];
                        let rest: usize = h.shape()[1..].iter().product();
                        h.reshape(vec![b, rest])?
                    }
                    Layer::Fixed(a) => a.forward(&h, false),
                    Layer::Pwlu(p) => p.forward(&h, false)?,
                };
            }
        }
        let mut report = AlignmentReport::default();
        for (i, l) in self.layers.iter().enumerate() {
            if let Layer::Pwlu(p) = l {
                let samples: Vec<&[f64]> = reservoirs[i].iter().map(|r| r.samples()).collect();
                report
                    .rows
                    .extend(p.alignment_rows(&self.layer_name(i), &samples));
            }
        }
        Ok(report)
    }
}

fn cached_input(layer: &Layer) -> Option<&Tensor> {
    match layer {
        Layer::Dense(d) => d.cached_input(),
        Layer::Conv2d(c) => c.cached_input(),
        Layer::Flatten { .. } => None,
        Layer::Fixed(a) => a.cached_input(),
        Layer::Pwlu(p) => p.cached_input(),
    }
}

/// Per-layer reservoir seed derived from the model seed.
pub fn reservoir_seed(seed: u64, layer: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ ((layer as u64 + 1) << 32)
}
