use std::collections::HashMap;

use rayon::prelude::*;

use super::prune::prune;
use super::{DecodeMode, DecodeResult, DecoderConfig, DecoderError, Hypothesis, Position, SilencePolicy};
use crate::alphabet::Alphabet;
use crate::criterion::{logadd2, EmissionTable, TransitionTable};
use crate::lm::{LexiconTrie, LmState, NGramLm, LN_10};
use crate::scalar::Real;

pub(crate) fn check_inputs(
    f: &EmissionTable<f64>,
    tr: &TransitionTable<f64>,
    lexicon: &LexiconTrie,
    alphabet: &Alphabet,
) -> Result<(), DecoderError> {
    if lexicon.is_empty() {
        return Err(DecoderError::EmptyLexicon);
    }
    if f.frames() == 0 {
        return Err(DecoderError::NoFrames);
    }
    if f.labels() != alphabet.len() || tr.labels() != alphabet.len() {
        return Err(DecoderError::Shape(format!(
            "{} emission labels and {} transition labels for a {}-symbol alphabet",
            f.labels(),
            tr.labels(),
            alphabet.len()
        )));
    }
    if let Some(bad) = (0..lexicon.num_words()).find(|&w| lexicon.spelling(w).iter().any(|&l| l >= alphabet.len())) {
        return Err(DecoderError::Shape(format!(
            "word {:?} uses labels outside the alphabet",
            lexicon.word(bad)
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct Key {
    position: Position,
    lm_state: LmState,
    words: usize,
    history: Option<Vec<usize>>,
}

struct Frontier<'c> {
    cfg: &'c DecoderConfig,
    word_cap: usize,
    hyps: Vec<Hypothesis>,
    index: HashMap<Key, usize>,
}

impl<'c> Frontier<'c> {
    fn new(cfg: &'c DecoderConfig) -> Self {
        Self {
            cfg,
            word_cap: cfg.max_words.unwrap_or(1),
            hyps: Vec::new(),
            index: HashMap::new(),
        }
    }

    fn push(&mut self, h: Hypothesis) {
        let key = Key {
            position: h.position,
            lm_state: h.lm_state.clone(),
            words: h.words.len().min(self.word_cap),
            history: (self.cfg.mode == DecodeMode::LogAdd).then(|| h.words.clone()),
        };
        match self.index.get(&key) {
            None => {
                self.index.insert(key, self.hyps.len());
                self.hyps.push(h);
            }
            Some(&i) => {
                let old = &mut self.hyps[i];
                match self.cfg.mode {
                    DecodeMode::Max => {
                        if h.score(self.cfg) > old.score(self.cfg) {
                            *old = h;
                        }
                    }
                    DecodeMode::LogAdd => old.acoustic = logadd2(old.acoustic, h.acoustic),
                }
            }
        }
    }
}

struct Search<'a> {
    f: &'a EmissionTable<f64>,
    tr: &'a TransitionTable<f64>,
    lm: &'a NGramLm,
    trie: &'a LexiconTrie,
    cfg: &'a DecoderConfig,
    silence: usize,
    node_label: Vec<usize>,
    word_ids: Vec<u32>,
    max_words: usize,
    /// Fewest further letters from each node to a word end (`usize::MAX` if none).
    to_word_end: Vec<usize>,
}

impl<'a> Search<'a> {
    fn smeared(&self, node: usize) -> f64 {
        LN_10 * self.trie.node(node).smeared()
    }

    fn step_score(&self, t: usize, from: Option<usize>, to: usize) -> f64 {
        let g = match from {
            None => self.tr.start(to),
            Some(l) => self.tr.get(l, to),
        };
        g + self.f.get(t, to)
    }

    /// Moves `h` (ending at frame `t - 1`, or nowhere when `t == 0`) into `position` at frame `t`.
    fn advance(&self, h: &Hypothesis, t: usize, position: Position, out: &mut Frontier<'_>) {
        let (label, provisional) = match position {
            Position::Silence => (self.silence, 0.0),
            Position::Letter(n) => (self.node_label[n], self.smeared(n)),
        };
        let from = (t > 0).then_some(h.last_label);
        out.push(Hypothesis {
            position,
            lm_state: h.lm_state.clone(),
            last_label: label,
            acoustic: h.acoustic + self.step_score(t, from, label),
            lm: h.lm,
            provisional,
            words: h.words.clone(),
            frame: t,
        });
    }

    fn commit(&self, h: &Hypothesis, word: usize) -> Hypothesis {
        let (p, state) = self.lm.score_id(&h.lm_state, self.word_ids[word]);
        let mut words = h.words.clone();
        words.push(word);
        Hypothesis {
            lm_state: state,
            lm: h.lm + LN_10 * p,
            provisional: 0.0,
            words,
            ..h.clone()
        }
    }

    fn start_words(&self, h: &Hypothesis, t: usize, out: &mut Frontier<'_>) {
        if h.words.len() < self.max_words {
            for &c in self.trie.node(LexiconTrie::ROOT).children().values() {
                self.advance(h, t, Position::Letter(c), out);
            }
        }
    }

    fn initial(&self, out: &mut Frontier<'_>) {
        let seed = Hypothesis {
            position: Position::Silence,
            lm_state: self.lm.begin_state(),
            last_label: self.silence,
            acoustic: 0.0,
            lm: 0.0,
            provisional: 0.0,
            words: Vec::new(),
            frame: 0,
        };
        self.start_words(&seed, 0, out);
        if self.cfg.silence != SilencePolicy::Never {
            self.advance(&seed, 0, Position::Silence, out);
        }
    }

    fn expand(&self, h: &Hypothesis, t: usize, out: &mut Frontier<'_>) {
        self.advance(h, t, h.position, out);
        match h.position {
            Position::Silence => self.start_words(h, t, out),
            Position::Letter(n) => {
                let node = self.trie.node(n);
                for &c in node.children().values() {
                    self.advance(h, t, Position::Letter(c), out);
                }
                if h.words.len() < self.max_words {
                    for &w in node.words() {
                        let done = self.commit(h, w);
                        if self.cfg.silence != SilencePolicy::Never {
                            self.advance(&done, t, Position::Silence, out);
                        }
                        if self.cfg.silence != SilencePolicy::Required {
                            self.start_words(&done, t, out);
                        }
                    }
                }
            }
        }
    }

    /// Whether `h`, at frame `t`, can still end in a complete word sequence by the last frame.
    fn can_finish(&self, h: &Hypothesis, t: usize) -> bool {
        let left = self.f.frames() - 1 - t;
        match h.position {
            Position::Silence if !h.words.is_empty() => true,
            Position::Silence => self.to_word_end[LexiconTrie::ROOT] <= left,
            Position::Letter(n) => self.to_word_end[n] <= left,
        }
    }

    /// Completed (words, acoustic, lm) candidates from the last frame.
    fn finals(&self, frontier: &[Hypothesis]) -> Vec<(Vec<usize>, f64, f64)> {
        let mut out = Vec::new();
        let mut finish = |h: &Hypothesis| {
            let lm = h.lm + LN_10 * self.lm.end_score(&h.lm_state);
            out.push((h.words.clone(), h.acoustic, lm));
        };
        for h in frontier {
            match h.position {
                Position::Silence if !h.words.is_empty() => finish(h),
                Position::Letter(n) if h.words.len() < self.max_words => {
                    for &w in self.trie.node(n).words() {
                        finish(&self.commit(h, w));
                    }
                }
                _ => {}
            }
        }
        out
    }
}

/// Beam search for the best word sequences. The lexicon should already be
/// smeared; an unsmeared trie simply carries no look-ahead.
pub fn decode<R: Real>(
    f: &EmissionTable<R>,
    tr: &TransitionTable<R>,
    lm: &NGramLm,
    lexicon: &LexiconTrie,
    alphabet: &Alphabet,
    cfg: &DecoderConfig,
) -> Result<Vec<DecodeResult>, DecoderError> {
    cfg.validate()?;
    let f = f.cast::<f64>();
    let tr = tr.cast::<f64>();
    check_inputs(&f, &tr, lexicon, alphabet)?;
    let word_ids = lexicon
        .words()
        .iter()
        .map(|w| lm.resolve(w))
        .collect::<Result<Vec<_>, _>>()?;
    let mut node_label = vec![alphabet.silence_id(); lexicon.num_nodes()];
    for n in 0..lexicon.num_nodes() {
        for (&l, &c) in lexicon.node(n).children() {
            node_label[c] = l;
        }
    }
    let mut to_word_end = vec![usize::MAX; lexicon.num_nodes()];
    // children always have larger indices than their parents
    for n in (0..lexicon.num_nodes()).rev() {
        let node = lexicon.node(n);
        to_word_end[n] = if node.words().is_empty() || n == LexiconTrie::ROOT {
            node.children()
                .values()
                .map(|&c| to_word_end[c].saturating_add(1))
                .min()
                .unwrap_or(usize::MAX)
        } else {
            0
        };
    }
    let search = Search {
        f: &f,
        tr: &tr,
        lm,
        trie: lexicon,
        cfg,
        silence: alphabet.silence_id(),
        node_label,
        word_ids,
        max_words: cfg.max_words.unwrap_or(usize::MAX),
        to_word_end,
    };

    let mut frontier = Frontier::new(cfg);
    search.initial(&mut frontier);
    frontier.hyps.retain(|h| search.can_finish(h, 0));
    let mut hyps = prune(frontier.hyps, cfg);
    if hyps.is_empty() {
        return Err(DecoderError::NoHypothesis { frame: 0 });
    }
    for t in 1..f.frames() {
        let mut next = Frontier::new(cfg);
        for h in &hyps {
            search.expand(h, t, &mut next);
        }
        next.hyps.retain(|h| search.can_finish(h, t));
        hyps = prune(next.hyps, cfg);
        if hyps.is_empty() {
            return Err(DecoderError::NoHypothesis { frame: t });
        }
    }

    let mut merged: Vec<(Vec<usize>, f64, f64)> = Vec::new();
    let mut seen: HashMap<Vec<usize>, usize> = HashMap::new();
    for (words, acoustic, lm_score) in search.finals(&hyps) {
        match seen.get(&words) {
            None => {
                seen.insert(words.clone(), merged.len());
                merged.push((words, acoustic, lm_score));
            }
            Some(&i) => {
                let m = &mut merged[i];
                match cfg.mode {
                    DecodeMode::Max => {
                        if acoustic > m.1 {
                            m.1 = acoustic;
                        }
                    }
                    DecodeMode::LogAdd => m.1 = logadd2(m.1, acoustic),
                }
            }
        }
    }
    if merged.is_empty() {
        return Err(DecoderError::NoHypothesis { frame: f.frames() - 1 });
    }
    let mut results: Vec<DecodeResult> = merged
        .into_iter()
        .map(|(w, a, l)| DecodeResult::new(w.iter().map(|&i| lexicon.word(i).to_string()).collect(), a, l, cfg))
        .collect();
    results.sort_by(|a, b| b.score.total_cmp(&a.score));
    results.truncate(cfg.nbest);
    Ok(results)
}

/// Decodes utterances in parallel; results are in input order.
pub fn decode_batch<R: Real>(
    utterances: &[EmissionTable<R>],
    tr: &TransitionTable<R>,
    lm: &NGramLm,
    lexicon: &LexiconTrie,
    alphabet: &Alphabet,
    cfg: &DecoderConfig,
) -> Vec<Result<Vec<DecodeResult>, DecoderError>> {
    utterances
        .par_iter()
        .map(|f| decode(f, tr, lm, lexicon, alphabet, cfg))
        .collect()
}
