//! Letter-based speech recognition: MFCC features, ASG and CTC criteria, a
//! 1D convolutional acoustic model, n-gram language models and a lexicon
//! beam-search decoder.
//!
//! Numeric code is generic over [`scalar::Real`] (`f32` or `f64`); the aliases
//! below fix the usual choices.

pub mod acoustic;
pub mod alphabet;
pub mod bench;
pub mod criterion;
pub mod decoder;
pub mod features;
pub mod io;
pub mod lm;
pub mod matrix;
pub mod metrics;
pub mod scalar;

pub use alphabet::{Alphabet, AlphabetError, LabelSequence};
pub use criterion::{asg_loss, ctc_loss, CriterionError, CriterionResult, EmissionTable, TransitionTable};
pub use decoder::{decode, exhaustive_decode, DecodeResult, DecoderConfig, DecoderError};
pub use features::{mfcc, FeatureConfig, FeatureSequence, Waveform};
pub use lm::{build_lexicon, smear, LexiconTrie, NGramLm};
pub use matrix::Matrix;
pub use scalar::Real;

pub type EmissionTableF32 = EmissionTable<f32>;
pub type EmissionTableF64 = EmissionTable<f64>;
pub type TransitionTableF32 = TransitionTable<f32>;
pub type TransitionTableF64 = TransitionTable<f64>;
pub type FeatureSequenceF32 = FeatureSequence<f32>;
pub type ModelParamsF32 = acoustic::ModelParams<f32>;
pub type CriterionResultF64 = CriterionResult<f64>;
