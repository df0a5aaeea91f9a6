use super::search::check_inputs;
use super::{DecodeMode, DecodeResult, DecoderConfig, DecoderError, SilencePolicy};
use crate::alphabet::Alphabet;
use crate::criterion::{forward_score, EmissionTable, LabelGraph, Mode, TransitionTable};
use crate::lm::{LexiconTrie, NGramLm, LN_10};
use crate::scalar::Real;

pub const EXHAUSTIVE_MAX_VOCAB: usize = 5;
pub const EXHAUSTIVE_MAX_FRAMES: usize = 8;

/// Label graph of one word sequence with silences placed per `policy`.
fn sequence_graph(spellings: &[&[usize]], silence: usize, policy: SilencePolicy) -> LabelGraph {
    let mut g = LabelGraph::new();
    let state = |g: &mut LabelGraph, label: usize| {
        let s = g.add_state(label, false, false);
        g.add_edge(s, s);
        s
    };
    let lead = (policy != SilencePolicy::Never).then(|| {
        let s = state(&mut g, silence);
        g.set_initial(s, true);
        s
    });
    let mut prev_last: Option<usize> = None;
    for (i, sp) in spellings.iter().enumerate() {
        let first = state(&mut g, sp[0]);
        let mut last = first;
        for &l in &sp[1..] {
            let s = state(&mut g, l);
            g.add_edge(last, s);
            last = s;
        }
        match prev_last {
            None => {
                g.set_initial(first, true);
                if let Some(s) = lead {
                    g.add_edge(s, first);
                }
            }
            Some(p) => {
                if policy != SilencePolicy::Never {
                    let s = state(&mut g, silence);
                    g.add_edge(p, s);
                    g.add_edge(s, first);
                }
                if policy != SilencePolicy::Required {
                    g.add_edge(p, first);
                }
            }
        }
        if i + 1 == spellings.len() {
            g.set_accepting(last, true);
            if policy != SilencePolicy::Never {
                let s = state(&mut g, silence);
                g.add_edge(last, s);
                g.set_accepting(s, true);
            }
        }
        prev_last = Some(last);
    }
    g
}

/// Scores every word sequence of 1 to `max_words` words directly on its label
/// graph and returns the best one. Refuses vocabularies above
/// [`EXHAUSTIVE_MAX_VOCAB`] words or inputs above [`EXHAUSTIVE_MAX_FRAMES`] frames.
pub fn exhaustive_decode<R: Real>(
    f: &EmissionTable<R>,
    tr: &TransitionTable<R>,
    lm: &NGramLm,
    lexicon: &LexiconTrie,
    alphabet: &Alphabet,
    cfg: &DecoderConfig,
    max_words: usize,
) -> Result<DecodeResult, DecoderError> {
    let f = f.cast::<f64>();
    let tr = tr.cast::<f64>();
    check_inputs(&f, &tr, lexicon, alphabet)?;
    let v = lexicon.num_words();
    if v > EXHAUSTIVE_MAX_VOCAB || f.frames() > EXHAUSTIVE_MAX_FRAMES {
        return Err(DecoderError::TooLarge(format!(
            "{v} words and {} frames (limits {EXHAUSTIVE_MAX_VOCAB} and {EXHAUSTIVE_MAX_FRAMES})",
            f.frames()
        )));
    }
    let mode = match cfg.mode {
        DecodeMode::Max => Mode::Max,
        DecodeMode::LogAdd => Mode::LogAdd,
    };
    let max_words = max_words.min(f.frames());
    let mut best: Option<DecodeResult> = None;
    let mut seq = Vec::with_capacity(max_words);
    for k in 1..=max_words {
        // sequences of k words in lexicographic order: the base-v digits of n
        for n in 0..v.pow(k as u32) {
            seq.clear();
            let mut rest = n;
            for _ in 0..k {
                seq.push(rest % v);
                rest /= v;
            }
            seq.reverse();
            let spellings: Vec<&[usize]> = seq.iter().map(|&w| lexicon.spelling(w)).collect();
            let graph = sequence_graph(&spellings, alphabet.silence_id(), cfg.silence);
            let Ok(u) = graph.unfold(f.frames()) else {
                continue;
            };
            let acoustic = forward_score(&u, &f, &tr, mode)?;
            let words: Vec<&str> = seq.iter().map(|&w| lexicon.word(w)).collect();
            let lm_score = LN_10 * lm.sentence_logprob(&words)?;
            let r = DecodeResult::new(words.iter().map(|w| w.to_string()).collect(), acoustic, lm_score, cfg);
            if best.as_ref().is_none_or(|b| r.score > b.score) {
                best = Some(r);
            }
        }
    }
    best.ok_or(DecoderError::NoHypothesis { frame: f.frames() - 1 })
}
