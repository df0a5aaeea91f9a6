//! Synthetic "speech" for the toy training task: each letter is a two-tone
//! template with jittered pitch and amplitude, buried in uniform noise.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::features::{mfcc, normalize, FeatureConfig, FeatureError, FeatureSequence, Waveform};

/// Tone pairs (Hz) for up to eight letters.
const TEMPLATES: [(f64, f64); 8] = [
    (350.0, 2300.0),
    (700.0, 1200.0),
    (280.0, 3400.0),
    (1000.0, 2800.0),
    (520.0, 1700.0),
    (850.0, 3900.0),
    (450.0, 5000.0),
    (1300.0, 2100.0),
];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub letters: Vec<char>,
    pub num_samples: usize,
    pub min_letters: usize,
    pub max_letters: usize,
    pub min_segment_ms: f64,
    pub max_segment_ms: f64,
    /// Half-width of the uniform noise added to every sample.
    pub noise: f64,
    pub sample_rate: u32,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            letters: vec!['a', 'b', 'c', 'd', 'e'],
            num_samples: 500,
            min_letters: 3,
            max_letters: 6,
            min_segment_ms: 80.0,
            max_segment_ms: 140.0,
            noise: 0.3,
            sample_rate: 16_000,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthUtterance {
    pub waveform: Waveform,
    pub transcription: String,
}

/// One letter sequence with no letter repeated back to back.
fn draw_text(rng: &mut ChaCha8Rng, cfg: &SynthConfig) -> Vec<usize> {
    let n = rng.gen_range(cfg.min_letters..=cfg.max_letters);
    let mut out: Vec<usize> = Vec::with_capacity(n);
    while out.len() < n {
        let k = rng.gen_range(0..cfg.letters.len());
        if out.last() != Some(&k) {
            out.push(k);
        }
    }
    out
}

pub fn generate(cfg: &SynthConfig) -> Vec<SynthUtterance> {
    assert!(
        !cfg.letters.is_empty() && cfg.letters.len() <= TEMPLATES.len(),
        "between 1 and {} letters supported",
        TEMPLATES.len()
    );
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let sr = cfg.sample_rate as f64;
    (0..cfg.num_samples)
        .map(|_| {
            let text = draw_text(&mut rng, cfg);
            let mut samples = Vec::new();
            for &k in &text {
                let ms = rng.gen_range(cfg.min_segment_ms..=cfg.max_segment_ms);
                let len = (ms * sr / 1000.0).round() as usize;
                let (f1, f2) = TEMPLATES[k];
                let jitter = rng.gen_range(0.97..1.03);
                let amp = rng.gen_range(0.6..1.0);
                let phase = rng.gen_range(0.0..2.0 * PI);
                for i in 0..len {
                    let t = i as f64 / sr;
                    let s = (2.0 * PI * f1 * jitter * t + phase).sin() + 0.6 * (2.0 * PI * f2 * jitter * t).sin();
                    samples.push(amp * 0.5 * s + rng.gen_range(-cfg.noise..=cfg.noise));
                }
            }
            SynthUtterance {
                waveform: Waveform::new(samples, cfg.sample_rate),
                transcription: text.iter().map(|&k| cfg.letters[k]).collect(),
            }
        })
        .collect()
}

/// Per-utterance normalised MFCCs paired with transcriptions.
pub fn featurize(
    utterances: &[SynthUtterance],
    features: &FeatureConfig,
) -> Result<Vec<(FeatureSequence<f32>, String)>, FeatureError> {
    utterances
        .iter()
        .map(|u| Ok((normalize(&mfcc::<f32>(&u.waveform, features)?), u.transcription.clone())))
        .collect()
}
