//! Back-off n-gram language model, lexicon trie and smearing.
//!
//! Scores are kept in log10 as in ARPA files. Callers working in natural log
//! multiply by [`LN_10`].

mod arpa;
mod lexicon;

pub use arpa::{load_arpa, parse_arpa, LmState, NGramLm, OovPolicy, BOS, EOS, UNK};
pub use lexicon::{build_lexicon, load_lexicon, read_lexicon, smear, LexiconTrie, SmearMode, TrieNode};

use thiserror::Error;

/// `ln(10)`: converts log10 scores to natural log.
pub const LN_10: f64 = std::f64::consts::LN_10;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LmError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("io: {0}")]
    Io(String),
    #[error("word {0:?} is not in the language model")]
    Oov(String),
    #[error("model has no <unk> entry")]
    NoUnk,
    #[error("lexicon: {0}")]
    Lexicon(String),
}

impl From<std::io::Error> for LmError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alphabet::Alphabet;

    const TOY2: &str = include_str!("../../tests/data/toy2.arpa");
    const TOY3: &str = include_str!("../../tests/data/toy3.arpa");
    const UNI: &str = include_str!("../../tests/data/unigram.arpa");

    fn lm(s: &str) -> NGramLm {
        parse_arpa(s.as_bytes()).unwrap()
    }

    fn ctx(lm: &NGramLm, words: &[&str]) -> LmState {
        let mut s = lm.null_state();
        for w in words {
            s = lm.score_word(&s, w).unwrap().1;
        }
        s
    }

    fn q(lm: &NGramLm, context: &[&str], w: &str) -> f64 {
        lm.score_word(&ctx(lm, context), w).unwrap().0
    }

    #[test]
    fn fixture_shapes() {
        let m = lm(TOY2);
        assert_eq!(m.order(), 2);
        assert_eq!(m.vocab_size(), 3);
        assert_eq!(m.num_entries(), 5);
        assert_eq!(m.ngram_count(2), 6);
        let u = lm(UNI);
        assert_eq!(u.order(), 1);
        assert_eq!(u.begin_state(), LmState::default());
        assert_eq!(q(&u, &["x"], "y"), -0.9);
        assert_eq!(u.implicit_backoffs(), vec![0]);
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn bigram_queries() {
        let m = lm(TOY2);
        assert_eq!(q(&m, &["a"], "b"), -0.30103);
        assert!((q(&m, &["a"], "c") - -0.6).abs() < 1e-12);
        assert_eq!(q(&m, &[], "c"), -0.5);
        let s = m.sentence_logprob(&["a", "b", "c"]).unwrap();
        assert!((s - -1.05103).abs() < 1e-12);
    }

    #[test]
    fn state_is_last_n_minus_one_words() {
        let m = lm(TOY3);
        let s = ctx(&m, &["a", "b", "c"]);
        let ids: Vec<u32> = ["b", "c"].iter().map(|w| m.word_id(w).unwrap()).collect();
        assert_eq!(s.words(), ids.as_slice());
    }

    #[test]
    fn oov_policies() {
        let m = lm(TOY3);
        assert_eq!(m.score_word(&m.null_state(), "zzz"), Err(LmError::Oov("zzz".into())));
        let u = m.clone().with_oov_policy(OovPolicy::Unk).unwrap();
        assert!((q(&u, &["a"], "zzz") - -1.6).abs() < 1e-12);
        assert_eq!(lm(TOY2).with_oov_policy(OovPolicy::Unk).unwrap_err(), LmError::NoUnk);
    }

    #[test]
    fn save_load_is_identical() {
        for text in [TOY2, TOY3, UNI] {
            let m = lm(text);
            let back = lm(&m.to_arpa());
            assert_eq!(back, m);
        }
    }

    #[test]
    fn smear_single_word_path() {
        let a = Alphabet::with_letters(&['a', 'b', 'c']).unwrap();
        let m = lm(TOY2);
        let t = smear(&build_lexicon(&["a"], &a).unwrap(), &m, SmearMode::Max).unwrap();
        for n in 0..t.num_nodes() {
            assert_eq!(t.node(n).smeared(), -0.6);
        }
        assert!(smear(
            &build_lexicon(&["d"], &Alphabet::default()).unwrap(),
            &m,
            SmearMode::Max
        )
        .is_err());
    }
}
