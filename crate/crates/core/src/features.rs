//! Power-spectrum and MFCC front ends.
//!
//! Defaults: 25 ms Hamming window, 10 ms stride, 512-point FFT, 40 HTK-mel
//! triangular filters spanning 0 Hz to Nyquist, natural-log energies floored at
//! 1e-10, orthonormal DCT-II keeping 13 cepstra, then first and second order
//! deltas over a ±2 frame regression window (39 dimensions in total).
//! Pre-emphasis is available but off by default.

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use thiserror::Error;

use crate::matrix::Matrix;
use crate::scalar::Real;

pub const REFERENCE_SAMPLE_RATE: u32 = 16_000;

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("waveform has {samples} samples, a single {window}-sample window needs more")]
    TooShort { samples: usize, window: usize },
    #[error("sample {0} is not finite")]
    NonFinite(usize),
    #[error("invalid feature configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        Self { samples, sample_rate }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn duration_ms(&self) -> f64 {
        self.samples.len() as f64 * 1000.0 / self.sample_rate as f64
    }

    pub fn scaled(&self, gain: f64) -> Self {
        Self::new(self.samples.iter().map(|s| s * gain).collect(), self.sample_rate)
    }
}

/// `T x d` matrix of feature frames.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence<R> {
    frames: Matrix<R>,
    stride_ms: f64,
    window_ms: f64,
}

impl<R: Real> FeatureSequence<R> {
    pub fn new(frames: Matrix<R>, stride_ms: f64) -> Self {
        Self {
            frames,
            stride_ms,
            window_ms: FeatureConfig::default().window_ms,
        }
    }

    pub fn with_window(frames: Matrix<R>, stride_ms: f64, window_ms: f64) -> Self {
        Self {
            frames,
            stride_ms,
            window_ms,
        }
    }

    pub fn frames(&self) -> &Matrix<R> {
        &self.frames
    }

    pub fn into_frames(self) -> Matrix<R> {
        self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.frames.cols()
    }

    pub fn stride_ms(&self) -> f64 {
        self.stride_ms
    }

    pub fn window_ms(&self) -> f64 {
        self.window_ms
    }

    pub fn cast<S: Real>(&self) -> FeatureSequence<S> {
        FeatureSequence::with_window(self.frames.cast(), self.stride_ms, self.window_ms)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureConfig {
    pub window_ms: f64,
    pub stride_ms: f64,
    pub n_fft: usize,
    pub n_mels: usize,
    pub n_ceps: usize,
    pub log_floor: f64,
    /// Coefficient of `y[n] = x[n] - k x[n-1]`, if enabled.
    pub preemphasis: Option<f64>,
    pub delta_window: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            window_ms: 25.0,
            stride_ms: 10.0,
            n_fft: 512,
            n_mels: 40,
            n_ceps: 13,
            log_floor: 1e-10,
            preemphasis: None,
            delta_window: 2,
        }
    }
}

impl FeatureConfig {
    pub fn window_samples(&self, sample_rate: u32) -> usize {
        (self.window_ms * sample_rate as f64 / 1000.0).round() as usize
    }

    pub fn hop_samples(&self, sample_rate: u32) -> usize {
        (self.stride_ms * sample_rate as f64 / 1000.0).round() as usize
    }
}

/// `floor((samples - window) / hop) + 1` complete windows, or 0 if none fits.
pub fn frame_count(samples: usize, window: usize, hop: usize) -> usize {
    if samples < window || hop == 0 {
        0
    } else {
        (samples - window) / hop + 1
    }
}

pub fn hamming(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / (n - 1) as f64).cos())
        .collect()
}

fn power_frames(w: &Waveform, cfg: &FeatureConfig) -> Result<Vec<Vec<f64>>, FeatureError> {
    let window = cfg.window_samples(w.sample_rate());
    let hop = cfg.hop_samples(w.sample_rate());
    if window == 0 || hop == 0 || cfg.n_fft < window {
        return Err(FeatureError::Config(format!(
            "window {window}, hop {hop}, fft size {}",
            cfg.n_fft
        )));
    }
    if let Some(i) = w.samples().iter().position(|s| !s.is_finite()) {
        return Err(FeatureError::NonFinite(i));
    }
    let frames = frame_count(w.samples().len(), window, hop);
    if frames == 0 {
        return Err(FeatureError::TooShort {
            samples: w.samples().len(),
            window,
        });
    }
    let signal: Vec<f64> = match cfg.preemphasis {
        Some(k) => {
            let s = w.samples();
            (0..s.len())
                .map(|i| if i == 0 { s[0] } else { s[i] - k * s[i - 1] })
                .collect()
        }
        None => w.samples().to_vec(),
    };
    let win = hamming(window);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(cfg.n_fft);
    let bins = cfg.n_fft / 2 + 1;
    let mut buf = vec![Complex::new(0.0, 0.0); cfg.n_fft];
    let mut out = Vec::with_capacity(frames);
    for t in 0..frames {
        let chunk = &signal[t * hop..t * hop + window];
        for (i, b) in buf.iter_mut().enumerate() {
            *b = Complex::new(if i < window { chunk[i] * win[i] } else { 0.0 }, 0.0);
        }
        fft.process(&mut buf);
        out.push(buf[..bins].iter().map(|c| c.norm_sqr()).collect());
    }
    Ok(out)
}

/// Squared FFT magnitudes, `n_fft / 2 + 1` bins per frame (257 by default).
pub fn power_spectrum<R: Real>(w: &Waveform, cfg: &FeatureConfig) -> Result<FeatureSequence<R>, FeatureError> {
    let frames = power_frames(w, cfg)?;
    let bins = cfg.n_fft / 2 + 1;
    let m = Matrix::from_fn(frames.len(), bins, |t, k| R::lit(frames[t][k]));
    Ok(FeatureSequence::with_window(m, cfg.stride_ms, cfg.window_ms))
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filters on the FFT bin grid, `n_mels x (n_fft/2+1)`.
pub fn mel_filterbank(n_mels: usize, n_fft: usize, sample_rate: u32) -> Vec<Vec<f64>> {
    let bins = n_fft / 2 + 1;
    let nyquist = sample_rate as f64 / 2.0;
    let top = hz_to_mel(nyquist);
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(top * i as f64 / (n_mels + 1) as f64))
        .collect();
    (0..n_mels)
        .map(|m| {
            let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            (0..bins)
                .map(|k| {
                    let f = k as f64 * sample_rate as f64 / n_fft as f64;
                    if f <= lo || f >= hi {
                        0.0
                    } else if f <= mid {
                        (f - lo) / (mid - lo)
                    } else {
                        (hi - f) / (hi - mid)
                    }
                })
                .collect()
        })
        .collect()
}

/// Orthonormal DCT-II, first `keep` coefficients.
pub fn dct2(x: &[f64], keep: usize) -> Vec<f64> {
    let n = x.len() as f64;
    (0..keep)
        .map(|k| {
            let s: f64 = x
                .iter()
                .enumerate()
                .map(|(i, &v)| v * (PI * k as f64 * (2.0 * i as f64 + 1.0) / (2.0 * n)).cos())
                .sum();
            let scale = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
            s * scale
        })
        .collect()
}

/// Regression deltas with edge frames replicated.
pub fn deltas(frames: &[Vec<f64>], window: usize) -> Vec<Vec<f64>> {
    let t_len = frames.len();
    let dim = frames.first().map_or(0, Vec::len);
    let denom: f64 = 2.0 * (1..=window).map(|n| (n * n) as f64).sum::<f64>();
    (0..t_len)
        .map(|t| {
            (0..dim)
                .map(|d| {
                    let mut acc = 0.0;
                    for n in 1..=window {
                        let fwd = frames[(t + n).min(t_len - 1)][d];
                        let back = frames[t.saturating_sub(n)][d];
                        acc += n as f64 * (fwd - back);
                    }
                    acc / denom
                })
                .collect()
        })
        .collect()
}

/// Cepstra plus deltas and delta-deltas (39 dimensions by default).
pub fn mfcc<R: Real>(w: &Waveform, cfg: &FeatureConfig) -> Result<FeatureSequence<R>, FeatureError> {
    if cfg.n_ceps > cfg.n_mels {
        return Err(FeatureError::Config(format!(
            "{} cepstra from {} filters",
            cfg.n_ceps, cfg.n_mels
        )));
    }
    let power = power_frames(w, cfg)?;
    let bank = mel_filterbank(cfg.n_mels, cfg.n_fft, w.sample_rate());
    let ceps: Vec<Vec<f64>> = power
        .iter()
        .map(|p| {
            let energies: Vec<f64> = bank
                .iter()
                .map(|filt| {
                    let e: f64 = filt.iter().zip(p).map(|(a, b)| a * b).sum();
                    e.max(cfg.log_floor).ln()
                })
                .collect();
            dct2(&energies, cfg.n_ceps)
        })
        .collect();
    let d1 = deltas(&ceps, cfg.delta_window);
    let d2 = deltas(&d1, cfg.delta_window);
    let dim = cfg.n_ceps * 3;
    let m = Matrix::from_fn(ceps.len(), dim, |t, j| {
        let v = match j / cfg.n_ceps {
            0 => ceps[t][j],
            1 => d1[t][j - cfg.n_ceps],
            _ => d2[t][j - 2 * cfg.n_ceps],
        };
        R::lit(v)
    });
    Ok(FeatureSequence::with_window(m, cfg.stride_ms, cfg.window_ms))
}

/// Per-dimension standardisation over the sequence. Constant dimensions become 0.
pub fn normalize<R: Real>(f: &FeatureSequence<R>) -> FeatureSequence<R> {
    let (t_len, dim) = f.frames().shape();
    let mut out = f.frames().clone();
    if t_len == 0 {
        return f.clone();
    }
    for d in 0..dim {
        let mean: f64 = (0..t_len).map(|t| f.frames()[(t, d)].wide()).sum::<f64>() / t_len as f64;
        let var: f64 = (0..t_len)
            .map(|t| {
                let x = f.frames()[(t, d)].wide() - mean;
                x * x
            })
            .sum::<f64>()
            / t_len as f64;
        let std = var.sqrt();
        let constant = std <= R::epsilon().wide() * 16.0 * mean.abs().max(1.0);
        for t in 0..t_len {
            out[(t, d)] = if constant {
                R::zero()
            } else {
                R::lit((f.frames()[(t, d)].wide() - mean) / std)
            };
        }
    }
    FeatureSequence::with_window(out, f.stride_ms(), f.window_ms())
}
