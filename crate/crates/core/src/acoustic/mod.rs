//! Strided 1D ConvNet acoustic model producing per-frame letter scores.

mod checkpoint;
mod conv;
mod network;
pub mod synth;
mod train;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use conv::{conv1d_backward, conv1d_forward, ConvGrads};
pub use network::{
    network_backward, network_forward, network_forward_cached, receptive_field, ForwardCache, NetworkGrads, OutputMode,
};
pub use train::{curve_csv, evaluate_ler, train_toy, EpochStats, TrainConfig, TrainOutcome};

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use thiserror::Error;

use crate::criterion::CriterionError;
use crate::scalar::Real;

/// Composed (kernel, stride) of [`REFERENCE_RAW_WAVE_CONFIG`]: a 1955 ms window
/// moving in 20 ms steps at 16 kHz.
pub const REFERENCE_RECEPTIVE_FIELD: (usize, usize) = (31280, 320);

/// Raw-waveform network. The first two layers stride (160 then 2), the last
/// two are `kw = 1` layers acting as fully connected ones; 30 outputs match
/// the default alphabet.
pub const REFERENCE_RAW_WAVE_CONFIG: &str = include_str!("../../configs/raw_wave.cfg");

#[derive(Debug, Error)]
pub enum AcousticError {
    #[error("input has {frames} frames, at least {min_frames} needed")]
    TooShort { frames: usize, min_frames: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("network config line {line}: {reason}")]
    Config { line: usize, reason: String },
    #[error("invalid network: {0}")]
    InvalidSpec(String),
    #[error("training sample {index} is infeasible: {reason}")]
    InfeasibleSample { index: usize, reason: String },
    #[error(transparent)]
    Criterion(#[from] CriterionError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Nonlinearity {
    #[default]
    HardTanh,
    Tanh,
    Relu,
    None,
}

impl Nonlinearity {
    pub fn apply<R: Real>(self, x: R) -> R {
        match self {
            Nonlinearity::HardTanh => x.max(-R::one()).min(R::one()),
            Nonlinearity::Tanh => x.tanh(),
            Nonlinearity::Relu => x.max(R::zero()),
            Nonlinearity::None => x,
        }
    }

    /// Derivative given the pre-activation `x`. HardTanh uses 0 at exactly ±1.
    pub fn derivative<R: Real>(self, x: R) -> R {
        match self {
            Nonlinearity::HardTanh => {
                if x > -R::one() && x < R::one() {
                    R::one()
                } else {
                    R::zero()
                }
            }
            Nonlinearity::Tanh => {
                let y = x.tanh();
                R::one() - y * y
            }
            Nonlinearity::Relu => {
                if x > R::zero() {
                    R::one()
                } else {
                    R::zero()
                }
            }
            Nonlinearity::None => R::one(),
        }
    }

    fn code(self) -> u8 {
        match self {
            Nonlinearity::HardTanh => 0,
            Nonlinearity::Tanh => 1,
            Nonlinearity::Relu => 2,
            Nonlinearity::None => 3,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        Some(match c {
            0 => Nonlinearity::HardTanh,
            1 => Nonlinearity::Tanh,
            2 => Nonlinearity::Relu,
            3 => Nonlinearity::None,
            _ => return None,
        })
    }
}

impl FromStr for Nonlinearity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "hardtanh" => Ok(Nonlinearity::HardTanh),
            "tanh" => Ok(Nonlinearity::Tanh),
            "relu" => Ok(Nonlinearity::Relu),
            "none" | "linear" => Ok(Nonlinearity::None),
            other => Err(format!("unknown nonlinearity {other:?}")),
        }
    }
}

impl fmt::Display for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Nonlinearity::HardTanh => "hardtanh",
            Nonlinearity::Tanh => "tanh",
            Nonlinearity::Relu => "relu",
            Nonlinearity::None => "none",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ConvLayerSpec {
    pub d_in: usize,
    pub d_out: usize,
    /// Kernel width in frames.
    pub kw: usize,
    /// Stride in frames.
    pub dw: usize,
    pub nonlinearity: Nonlinearity,
}

impl ConvLayerSpec {
    pub fn new(d_in: usize, d_out: usize, kw: usize, dw: usize, nonlinearity: Nonlinearity) -> Self {
        Self {
            d_in,
            d_out,
            kw,
            dw,
            nonlinearity,
        }
    }

    pub fn validate(&self) -> Result<(), AcousticError> {
        if self.d_in == 0 || self.d_out == 0 || self.kw == 0 || self.dw == 0 {
            return Err(AcousticError::InvalidSpec(format!(
                "layer sizes must be positive: {self:?}"
            )));
        }
        Ok(())
    }

    /// `floor((T_x - kw) / dw) + 1`, or `None` when the input is shorter than the kernel.
    pub fn output_len(&self, input_len: usize) -> Option<usize> {
        (input_len >= self.kw).then(|| (input_len - self.kw) / self.dw + 1)
    }

    pub fn num_weights(&self) -> usize {
        self.d_out * self.d_in * self.kw
    }
}

/// Ordered layers; each layer's `d_in` equals the previous layer's `d_out`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkSpec {
    layers: Vec<ConvLayerSpec>,
}

impl NetworkSpec {
    pub fn new(layers: Vec<ConvLayerSpec>) -> Result<Self, AcousticError> {
        if layers.is_empty() {
            return Err(AcousticError::InvalidSpec("no layers".into()));
        }
        for l in &layers {
            l.validate()?;
        }
        for (i, w) in layers.windows(2).enumerate() {
            if w[0].d_out != w[1].d_in {
                return Err(AcousticError::InvalidSpec(format!(
                    "layer {} outputs {} channels but layer {} expects {}",
                    i,
                    w[0].d_out,
                    i + 1,
                    w[1].d_in
                )));
            }
        }
        Ok(Self { layers })
    }

    /// Parses `d_in d_out kw dw nonlinearity` lines. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, AcousticError> {
        let mut layers = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |reason: String| AcousticError::Config { line: n + 1, reason };
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 5 {
                return Err(err(format!("expected 5 fields, found {}", fields.len())));
            }
            let num = |i: usize| {
                fields[i]
                    .parse::<usize>()
                    .map_err(|e| err(format!("field {} ({:?}): {e}", i + 1, fields[i])))
            };
            let nl = fields[4].parse::<Nonlinearity>().map_err(err)?;
            layers.push(ConvLayerSpec::new(num(0)?, num(1)?, num(2)?, num(3)?, nl));
        }
        Self::new(layers)
    }

    pub fn to_config(&self) -> String {
        let mut s = String::from("# d_in d_out kw dw nonlinearity\n");
        for l in &self.layers {
            s.push_str(&format!(
                "{} {} {} {} {}\n",
                l.d_in, l.d_out, l.kw, l.dw, l.nonlinearity
            ));
        }
        s
    }

    /// The shipped raw-waveform network.
    pub fn reference_raw_wave() -> Self {
        Self::parse(REFERENCE_RAW_WAVE_CONFIG).expect("bundled config parses")
    }

    pub fn layers(&self) -> &[ConvLayerSpec] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].d_in
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].d_out
    }

    /// Output frames for `input_len` input frames, `None` if too short.
    pub fn output_len(&self, input_len: usize) -> Option<usize> {
        self.layers.iter().try_fold(input_len, |len, l| l.output_len(len))
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.num_weights() + l.d_out).sum()
    }
}

/// Weights `w[i][j][k]` stored flat at `(i * d_in + j) * kw + k`, plus biases.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<R> {
    pub weight: Vec<R>,
    pub bias: Vec<R>,
}

impl<R: Real> LayerParams<R> {
    pub fn zeros(spec: &ConvLayerSpec) -> Self {
        Self {
            weight: vec![R::zero(); spec.num_weights()],
            bias: vec![R::zero(); spec.d_out],
        }
    }

    #[inline]
    pub fn w(&self, spec: &ConvLayerSpec, i: usize, j: usize, k: usize) -> R {
        self.weight[(i * spec.d_in + j) * spec.kw + k]
    }

    pub fn check(&self, spec: &ConvLayerSpec) -> Result<(), AcousticError> {
        if self.weight.len() != spec.num_weights() || self.bias.len() != spec.d_out {
            return Err(AcousticError::Shape(format!(
                "layer params have {} weights / {} biases, spec wants {} / {}",
                self.weight.len(),
                self.bias.len(),
                spec.num_weights(),
                spec.d_out
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<R> {
    pub layers: Vec<LayerParams<R>>,
}

impl<R: Real> ModelParams<R> {
    pub fn zeros(spec: &NetworkSpec) -> Self {
        Self {
            layers: spec.layers().iter().map(LayerParams::zeros).collect(),
        }
    }

    /// Uniform in `±1/sqrt(d_in * kw)` for weights and biases.
    pub fn init<G: Rng + ?Sized>(spec: &NetworkSpec, rng: &mut G) -> Self {
        let layers = spec
            .layers()
            .iter()
            .map(|l| {
                let bound = 1.0 / ((l.d_in * l.kw) as f64).sqrt();
                let mut draw = || R::lit(rng.gen_range(-bound..bound));
                LayerParams {
                    weight: (0..l.num_weights()).map(|_| draw()).collect(),
                    bias: (0..l.d_out).map(|_| draw()).collect(),
                }
            })
            .collect();
        Self { layers }
    }

    pub fn check(&self, spec: &NetworkSpec) -> Result<(), AcousticError> {
        if self.layers.len() != spec.layers().len() {
            return Err(AcousticError::Shape(format!(
                "{} parameter layers for {} spec layers",
                self.layers.len(),
                spec.layers().len()
            )));
        }
        for (p, l) in self.layers.iter().zip(spec.layers()) {
            p.check(l)?;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    pub fn cast<S: Real>(&self) -> ModelParams<S> {
        ModelParams {
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams {
                    weight: l.weight.iter().map(|v| S::lit(v.wide())).collect(),
                    bias: l.bias.iter().map(|v| S::lit(v.wide())).collect(),
                })
                .collect(),
        }
    }
}
