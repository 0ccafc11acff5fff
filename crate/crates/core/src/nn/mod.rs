//! The convolutional encoder + feed-forward head classifier.
//!
//! Each encoder block is `conv -> SiLU -> conv -> SiLU -> maxpool`; channels
//! double from one block to the next and dropout sits between blocks. The
//! flattened encoder output feeds `fc1 -> SiLU -> fc2`, which emits raw logits.

mod checkpoint;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint, CheckpointError,
    CheckpointMeta, RawCheckpoint,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::Rng;
use crate::tensor::{Mode, Real, Tape, Tensor, TensorError, Var};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("input shape {got:?} does not match expected {expected:?}")]
    InputShape { expected: Vec<usize>, got: Vec<usize> },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T> = std::result::Result<T, NnError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub in_channels: u32,
    pub window_len: u32,
    pub depth: u32,
    pub base_channels: u32,
    pub conv_kernel: u32,
    pub pool_kernel: u32,
    pub dropout_rate: f64,
    pub fc_hidden: u32,
    pub num_classes: u32,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            in_channels: 8,
            window_len: 64,
            depth: 3,
            base_channels: 16,
            conv_kernel: 3,
            pool_kernel: 2,
            dropout_rate: 0.15,
            fc_hidden: 128,
            num_classes: 3,
        }
    }
}

/// One trainable layer of the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSpec {
    Conv { cin: usize, cout: usize, kernel: usize },
    Linear { fan_in: usize, fan_out: usize },
}

impl LayerSpec {
    pub fn weight_shape(&self) -> Vec<usize> {
        match *self {
            LayerSpec::Conv { cin, cout, kernel } => vec![cout, cin, kernel],
            LayerSpec::Linear { fan_in, fan_out } => vec![fan_in, fan_out],
        }
    }

    pub fn bias_len(&self) -> usize {
        match *self {
            LayerSpec::Conv { cout, .. } => cout,
            LayerSpec::Linear { fan_out, .. } => fan_out,
        }
    }

    pub fn fan_in(&self) -> usize {
        match *self {
            LayerSpec::Conv { cin, kernel, .. } => cin * kernel,
            LayerSpec::Linear { fan_in, .. } => fan_in,
        }
    }

    pub fn param_count(&self) -> usize {
        self.weight_shape().iter().product::<usize>() + self.bias_len()
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("in_channels", self.in_channels),
            ("window_len", self.window_len),
            ("depth", self.depth),
            ("base_channels", self.base_channels),
            ("conv_kernel", self.conv_kernel),
            ("pool_kernel", self.pool_kernel),
            ("fc_hidden", self.fc_hidden),
            ("num_classes", self.num_classes),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(NnError::Config(format!("{name} must be positive")));
        }
        if self.conv_kernel.is_multiple_of(2) {
            return Err(NnError::Config(format!(
                "conv_kernel must be odd for same-length padding, got {}",
                self.conv_kernel
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(NnError::Config(format!(
                "dropout_rate must lie in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        let shrink = (self.pool_kernel as u64)
            .checked_pow(self.depth)
            .filter(|&s| s <= self.window_len as u64)
            .ok_or_else(|| {
                NnError::Config(format!(
                    "pool_kernel^depth = {}^{} exceeds window_len {}",
                    self.pool_kernel, self.depth, self.window_len
                ))
            })?;
        if !(self.window_len as u64).is_multiple_of(shrink) {
            return Err(NnError::Config(format!(
                "window_len {} not divisible by pool_kernel^depth = {shrink}",
                self.window_len
            )));
        }
        if self.depth > 16 {
            return Err(NnError::Config(format!("depth {} exceeds 16", self.depth)));
        }
        if (self.base_channels as u64) << (self.depth - 1) > u32::MAX as u64 {
            return Err(NnError::Config("channel width overflows".into()));
        }
        if self.checked_param_count().is_none() {
            return Err(NnError::Config("parameter count overflows".into()));
        }
        Ok(())
    }

    fn checked_param_count(&self) -> Option<u64> {
        let k = self.conv_kernel as u64;
        let mut total = 0u64;
        let mut cin = self.in_channels as u64;
        for block in 0..self.depth {
            let w = (self.base_channels as u64) << block;
            for c in [cin, w] {
                total = total.checked_add(w.checked_mul(c)?.checked_mul(k)?.checked_add(w)?)?;
            }
            cin = w;
        }
        let len = self.window_len as u64 / (self.pool_kernel as u64).checked_pow(self.depth)?;
        let flat = cin.checked_mul(len)?;
        let hidden = self.fc_hidden as u64;
        let classes = self.num_classes as u64;
        total = total.checked_add(flat.checked_mul(hidden)?.checked_add(hidden)?)?;
        total = total.checked_add(hidden.checked_mul(classes)?.checked_add(classes)?)?;
        (total <= u32::MAX as u64).then_some(total)
    }

    pub fn pad(&self) -> usize {
        (self.conv_kernel as usize - 1) / 2
    }

    /// Channel width of encoder block `block` (0-based).
    pub fn block_width(&self, block: u32) -> usize {
        (self.base_channels as usize) << block
    }

    /// Length of the flattened encoder output.
    pub fn flat_features(&self) -> usize {
        let len = self.window_len as usize / (self.pool_kernel as usize).pow(self.depth);
        self.block_width(self.depth - 1) * len
    }

    /// Trainable layers in parameter order: the convs of every block, then fc1, fc2.
    pub fn layers(&self) -> Vec<LayerSpec> {
        let k = self.conv_kernel as usize;
        let mut layers = Vec::with_capacity(2 * self.depth as usize + 2);
        let mut cin = self.in_channels as usize;
        for block in 0..self.depth {
            let w = self.block_width(block);
            layers.push(LayerSpec::Conv {
                cin,
                cout: w,
                kernel: k,
            });
            layers.push(LayerSpec::Conv {
                cin: w,
                cout: w,
                kernel: k,
            });
            cin = w;
        }
        layers.push(LayerSpec::Linear {
            fan_in: self.flat_features(),
            fan_out: self.fc_hidden as usize,
        });
        layers.push(LayerSpec::Linear {
            fan_in: self.fc_hidden as usize,
            fan_out: self.num_classes as usize,
        });
        layers
    }

    /// Parameter tensor names in storage order.
    pub fn param_names(&self) -> Vec<String> {
        let convs = 2 * self.depth as usize;
        (0..convs + 2)
            .flat_map(|i| {
                let layer = if i < convs {
                    format!("conv{}", i + 1)
                } else {
                    format!("fc{}", i - convs + 1)
                };
                [format!("{layer}.weight"), format!("{layer}.bias")]
            })
            .collect()
    }
}

/// Total number of trainable scalars for `cfg`.
pub fn param_count(cfg: &ModelConfig) -> usize {
    cfg.layers().iter().map(LayerSpec::param_count).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub value: Tensor<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmotionNet<T> {
    cfg: ModelConfig,
    params: Vec<Param<T>>,
}

impl<T: Real> EmotionNet<T> {
    /// Fan-in uniform initialization on `(-sqrt(1/fan_in), sqrt(1/fan_in))`,
    /// drawn layer by layer (weight, then bias) in [`ModelConfig::layers`] order.
    pub fn build(cfg: ModelConfig, rng: &mut Rng) -> Result<Self> {
        cfg.validate()?;
        let names = cfg.param_names();
        let mut params = Vec::with_capacity(names.len());
        for (i, layer) in cfg.layers().iter().enumerate() {
            let bound = (1.0 / layer.fan_in() as f64).sqrt();
            let wshape = layer.weight_shape();
            let wn: usize = wshape.iter().product();
            let w = (0..wn).map(|_| T::lit(rng.uniform_range(-bound, bound))).collect();
            let b = (0..layer.bias_len())
                .map(|_| T::lit(rng.uniform_range(-bound, bound)))
                .collect();
            params.push(Param {
                name: names[2 * i].clone(),
                value: Tensor::new(wshape, w)?,
            });
            params.push(Param {
                name: names[2 * i + 1].clone(),
                value: Tensor::new(vec![layer.bias_len()], b)?,
            });
        }
        Ok(Self { cfg, params })
    }

    /// Assemble from explicit parameters; names and shapes must match `cfg`.
    pub fn from_params(cfg: ModelConfig, params: Vec<Param<T>>) -> Result<Self> {
        cfg.validate()?;
        let names = cfg.param_names();
        let layers = cfg.layers();
        if params.len() != names.len() {
            return Err(NnError::Config(format!(
                "expected {} parameter tensors, got {}",
                names.len(),
                params.len()
            )));
        }
        for (i, p) in params.iter().enumerate() {
            let layer = &layers[i / 2];
            let shape = if i % 2 == 0 {
                layer.weight_shape()
            } else {
                vec![layer.bias_len()]
            };
            if p.name != names[i] || p.value.shape() != shape.as_slice() {
                return Err(NnError::Config(format!(
                    "parameter {i}: expected {} {:?}, got {} {:?}",
                    names[i],
                    shape,
                    p.name,
                    p.value.shape()
                )));
            }
        }
        Ok(Self { cfg, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Records every parameter on `tape` as a gradient-tracked leaf.
    pub fn bind<'t>(&self, tape: &'t Tape<T>) -> Vec<Var<'t, T>> {
        self.params.iter().map(|p| tape.param(p.value.clone())).collect()
    }

    /// Forward pass using parameters already bound to `tape`.
    pub fn forward_on<'t>(
        &self,
        params: &[Var<'t, T>],
        input: Var<'t, T>,
        mode: Mode,
        rng: Option<&mut Rng>,
    ) -> Result<Var<'t, T>> {
        self.run(params, input, mode, rng, None)
    }

    fn run<'t>(
        &self,
        params: &[Var<'t, T>],
        input: Var<'t, T>,
        mode: Mode,
        mut rng: Option<&mut Rng>,
        mut trace: Option<&mut Vec<Vec<usize>>>,
    ) -> Result<Var<'t, T>> {
        let shape = input.shape();
        let expected = [self.cfg.in_channels as usize, self.cfg.window_len as usize];
        if shape.len() != 3 || shape[1..] != expected {
            return Err(NnError::InputShape {
                expected: vec![shape.first().copied().unwrap_or(0), expected[0], expected[1]],
                got: shape,
            });
        }
        if mode == Mode::Train && rng.is_none() {
            return Err(TensorError::MissingRng.into());
        }
        let pad = self.cfg.pad();
        let depth = self.cfg.depth as usize;
        let mut x = input;
        for block in 0..depth {
            for conv in 0..2 {
                let idx = 2 * (2 * block + conv);
                x = x.conv1d(params[idx], params[idx + 1], pad)?.silu()?;
            }
            x = x.maxpool1d(self.cfg.pool_kernel as usize)?;
            if let Some(t) = trace.as_deref_mut() {
                t.push(x.shape());
            }
            if block + 1 < depth {
                x = x.dropout(self.cfg.dropout_rate, mode, rng.as_deref_mut())?;
            }
        }
        x = x.flatten()?;
        if let Some(t) = trace {
            t.push(x.shape());
        }
        let fc = 4 * depth;
        x = x.matmul(params[fc])?.add(params[fc + 1])?.silu()?;
        x = x.matmul(params[fc + 2])?.add(params[fc + 3])?;
        Ok(x)
    }

    /// Logits for a `[B, in_channels, window_len]` batch, without gradient tracking.
    pub fn forward(&self, batch: &Tensor<T>, mode: Mode, rng: Option<&mut Rng>) -> Result<Tensor<T>> {
        let tape = Tape::new();
        let params: Vec<_> = self.params.iter().map(|p| tape.constant(p.value.clone())).collect();
        let input = tape.constant(batch.clone());
        Ok(self.run(&params, input, mode, rng, None)?.value())
    }

    /// Shapes after each encoder block and after flattening (eval mode).
    pub fn shape_trace(&self, batch: &Tensor<T>) -> Result<Vec<Vec<usize>>> {
        let tape = Tape::new();
        let params: Vec<_> = self.params.iter().map(|p| tape.constant(p.value.clone())).collect();
        let input = tape.constant(batch.clone());
        let mut trace = vec![input.shape()];
        self.run(&params, input, Mode::Eval, None, Some(&mut trace))?;
        Ok(trace)
    }

    /// Eval-mode argmax class per row.
    pub fn predict(&self, batch: &Tensor<T>) -> Result<Vec<usize>> {
        let logits = self.forward(batch, Mode::Eval, None)?;
        Ok(argmax_rows(logits.data(), self.cfg.num_classes as usize))
    }
}

/// Row-wise argmax; ties go to the smallest index.
pub fn argmax_rows<T: Real>(logits: &[T], classes: usize) -> Vec<usize> {
    logits
        .chunks_exact(classes)
        .map(|row| {
            let mut best = 0;
            for (i, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

/// Row-wise softmax, used only for reporting probabilities.
pub fn softmax_rows<T: Real>(logits: &[T], classes: usize) -> Vec<T> {
    let mut out = vec![T::zero(); logits.len()];
    for (row, o) in logits.chunks_exact(classes).zip(out.chunks_exact_mut(classes)) {
        let mx = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut s = T::zero();
        for (p, &x) in o.iter_mut().zip(row) {
            *p = (x - mx).exp();
            s = s + *p;
        }
        for p in o.iter_mut() {
            *p = *p / s;
        }
    }
    out
}
