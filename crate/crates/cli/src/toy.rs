//! `train-toy`: synthetic data, toy network training, checkpoint and LER curve.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use letterspeech::acoustic::synth::{featurize, generate, SynthConfig};
use letterspeech::acoustic::{curve_csv, save_checkpoint, train_toy, NetworkSpec, TrainConfig};
use letterspeech::alphabet::Alphabet;
use letterspeech::features::FeatureConfig;
use letterspeech::io::save_transitions;
use serde::Deserialize;

/// Every key is required.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyConfig {
    /// Network layer file, relative to the config file.
    pub network: String,
    pub synth: SynthSection,
    pub train: TrainConfig,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    /// Letters the synthetic utterances are spelled with.
    pub letters: String,
    pub num_samples: usize,
    pub min_letters: usize,
    pub max_letters: usize,
    pub min_segment_ms: f64,
    pub max_segment_ms: f64,
    pub noise: f64,
    pub sample_rate: u32,
    pub seed: u64,
}

impl SynthSection {
    fn to_config(&self) -> SynthConfig {
        SynthConfig {
            letters: self.letters.chars().collect(),
            num_samples: self.num_samples,
            min_letters: self.min_letters,
            max_letters: self.max_letters,
            min_segment_ms: self.min_segment_ms,
            max_segment_ms: self.max_segment_ms,
            noise: self.noise,
            sample_rate: self.sample_rate,
            seed: self.seed,
        }
    }
}

pub fn parse_config(text: &str) -> Result<ToyConfig> {
    Ok(toml::from_str(text)?)
}

/// Runs the configured training and writes `model.ckpt`, `transitions.lstb`,
/// `alphabet.txt` and `ler.csv` into `out_dir`. `seed` replaces `train.seed`.
pub fn train(config: &Path, out_dir: &Path, seed: Option<u64>, out: &mut impl Write) -> Result<()> {
    let text = fs::read_to_string(config).with_context(|| format!("reading {}", config.display()))?;
    let mut cfg = parse_config(&text).with_context(|| format!("invalid config {}", config.display()))?;
    if let Some(s) = seed {
        cfg.train.seed = s;
    }
    let network_path = config.parent().unwrap_or(Path::new(".")).join(&cfg.network);
    let spec_text =
        fs::read_to_string(&network_path).with_context(|| format!("reading network {}", network_path.display()))?;
    let spec = NetworkSpec::parse(&spec_text).with_context(|| format!("parsing {}", network_path.display()))?;
    let letters: Vec<char> = cfg.synth.letters.chars().collect();
    if letters.is_empty() {
        bail!("synth.letters is empty");
    }
    let alphabet = Alphabet::with_letters(&letters)?;

    let data = featurize(&generate(&cfg.synth.to_config()), &FeatureConfig::default())?;
    let outcome = train_toy(&data, &spec, &alphabet, &cfg.train)?;

    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    save_checkpoint(out_dir.join("model.ckpt"), &spec, &outcome.params)?;
    save_transitions(out_dir.join("transitions.lstb"), &outcome.transitions)?;
    let mut alphabet_file = Vec::new();
    alphabet.write(&mut alphabet_file)?;
    fs::write(out_dir.join("alphabet.txt"), alphabet_file)?;
    fs::write(out_dir.join("ler.csv"), curve_csv(&outcome.curve))?;

    if let Some(last) = outcome.curve.last() {
        writeln!(
            out,
            "epochs\t{}\ttrain_loss\t{:.6}\theldout_ler\t{:.6}",
            last.epoch, last.train_loss, last.heldout_ler
        )?;
    }
    Ok(())
}
