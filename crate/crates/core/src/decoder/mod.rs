//! One-pass lexicon beam search over emission and transition scores with an
//! n-gram language model.
//!
//! A word sequence `W` is scored as
//! `acoustic(W) + alpha * ln P_lm(W) + beta * |W|`, where `P_lm` includes the
//! sentence boundary tokens and `acoustic` combines the scores of all frame
//! paths spelling `W` (max or log-add, see [`DecodeMode`]).

mod exhaustive;
mod prune;
mod search;

pub use exhaustive::{exhaustive_decode, EXHAUSTIVE_MAX_FRAMES, EXHAUSTIVE_MAX_VOCAB};
pub use prune::prune;
pub use search::{decode, decode_batch};

use thiserror::Error;

use crate::criterion::CriterionError;
use crate::lm::{LmError, LmState};

#[derive(Debug, Error, PartialEq)]
pub enum DecoderError {
    #[error("lexicon is empty")]
    EmptyLexicon,
    #[error("emission table has no frames")]
    NoFrames,
    #[error("no hypothesis survived to frame {frame}")]
    NoHypothesis { frame: usize },
    #[error("invalid decoder config: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("instance too large for exhaustive search: {0}")]
    TooLarge(String),
    #[error(transparent)]
    Lm(#[from] LmError),
    #[error(transparent)]
    Criterion(#[from] CriterionError),
}

/// How acoustic scores of converging paths are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DecodeMode {
    #[default]
    Max,
    /// Sums path probabilities; hypotheses only merge when their word histories agree.
    LogAdd,
}

/// Where the silence label may appear.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SilencePolicy {
    /// Optionally before the first word, between words and after the last one.
    #[default]
    Optional,
    /// Mandatory between words, optional at both ends.
    Required,
    /// Never; words abut directly.
    Never,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderConfig {
    /// LM weight.
    pub alpha: f64,
    /// Added once per word; negative values penalise insertions.
    pub beta: f64,
    pub beam_size: usize,
    /// Hypotheses more than this far below the frame best are dropped.
    pub beam_threshold: f64,
    pub mode: DecodeMode,
    pub silence: SilencePolicy,
    pub max_words: Option<usize>,
    pub nbest: usize,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 0.0,
            beam_size: 100,
            beam_threshold: 25.0,
            mode: DecodeMode::Max,
            silence: SilencePolicy::Optional,
            max_words: None,
            nbest: 1,
        }
    }
}

impl DecoderConfig {
    /// Beam large enough to never prune.
    pub fn exhaustive() -> Self {
        Self {
            beam_size: usize::MAX,
            beam_threshold: f64::INFINITY,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), DecoderError> {
        if self.beam_size == 0 {
            return Err(DecoderError::Config("beam_size must be at least 1".into()));
        }
        if self.beam_threshold.is_nan() || self.beam_threshold <= 0.0 {
            return Err(DecoderError::Config("beam_threshold must be positive".into()));
        }
        if !self.alpha.is_finite() || !self.beta.is_finite() {
            return Err(DecoderError::Config("alpha and beta must be finite".into()));
        }
        if self.nbest == 0 {
            return Err(DecoderError::Config("nbest must be at least 1".into()));
        }
        if self.max_words == Some(0) {
            return Err(DecoderError::Config("max_words must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Position {
    Silence,
    /// Inside or at the end of a word: a non-root trie node.
    Letter(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub position: Position,
    pub lm_state: LmState,
    pub last_label: usize,
    pub acoustic: f64,
    /// Natural-log LM score of committed words, unweighted.
    pub lm: f64,
    /// Smeared natural-log LM estimate for the word in progress.
    pub provisional: f64,
    /// Lexicon indices of committed words.
    pub words: Vec<usize>,
    pub frame: usize,
}

impl Hypothesis {
    /// Ranking score used for pruning.
    pub fn score(&self, cfg: &DecoderConfig) -> f64 {
        self.acoustic + cfg.alpha * (self.lm + self.provisional) + cfg.beta * self.words.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeResult {
    pub words: Vec<String>,
    /// `acoustic + alpha * lm + beta * words.len()`.
    pub score: f64,
    pub acoustic: f64,
    /// Natural-log sentence probability, unweighted.
    pub lm: f64,
}

impl DecodeResult {
    fn new(words: Vec<String>, acoustic: f64, lm: f64, cfg: &DecoderConfig) -> Self {
        let score = acoustic + cfg.alpha * lm + cfg.beta * words.len() as f64;
        Self {
            words,
            score,
            acoustic,
            lm,
        }
    }

    pub fn text(&self) -> String {
        self.words.join(" ")
    }
}
