//! Grapheme inventory and the repetition-label encoding of transcriptions.
//!
//! Runs of a repeated letter are written with two extra labels: `2` stands for
//! "the previous letter, twice in total" and `3` for "three times in total".
//! `caterpillar` therefore becomes `c a t e r p i l 2 a r`. Runs longer than
//! three are split greedily left to right, so `aaaa` is `a 3 a`.
//!
//! Whitespace runs map to a single silence label `|`.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};

use thiserror::Error;

pub const SILENCE_SYMBOL: char = '|';
pub const REP2_SYMBOL: char = '2';
pub const REP3_SYMBOL: char = '3';

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AlphabetError {
    #[error("character {ch:?} at offset {offset} is not spellable in the alphabet")]
    Unspellable { ch: char, offset: usize },
    #[error("label id {id} at position {position} is outside the alphabet (size {size})")]
    InvalidId { id: usize, position: usize, size: usize },
    #[error("malformed label sequence at position {position}: {reason}")]
    Malformed { position: usize, reason: &'static str },
    #[error("alphabet file line {line}: {reason}")]
    BadFile { line: usize, reason: String },
    #[error("duplicate symbol {0:?} in alphabet")]
    DuplicateSymbol(char),
    #[error("alphabet is missing the required symbol {0:?}")]
    MissingSymbol(char),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for AlphabetError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e.to_string())
    }
}

/// Ordered grapheme inventory. Ids are positions in `symbols`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alphabet {
    symbols: Vec<char>,
    index: HashMap<char, usize>,
    silence_id: usize,
    rep2_id: usize,
    rep3_id: usize,
}

impl Default for Alphabet {
    /// The 30-symbol English inventory: `a`..`z`, apostrophe, silence, `2`, `3`.
    fn default() -> Self {
        let mut letters: Vec<char> = ('a'..='z').collect();
        letters.push('\'');
        Self::with_letters(&letters).expect("default inventory is well formed")
    }
}

impl Alphabet {
    /// Letters in the given order, followed by silence and the two repetition labels.
    pub fn with_letters(letters: &[char]) -> Result<Self, AlphabetError> {
        let mut symbols = letters.to_vec();
        symbols.extend([SILENCE_SYMBOL, REP2_SYMBOL, REP3_SYMBOL]);
        Self::from_symbols(symbols)
    }

    /// Arbitrary symbol order; the three special symbols must be present.
    pub fn from_symbols(symbols: Vec<char>) -> Result<Self, AlphabetError> {
        let mut index = HashMap::with_capacity(symbols.len());
        for (i, &s) in symbols.iter().enumerate() {
            if index.insert(s, i).is_some() {
                return Err(AlphabetError::DuplicateSymbol(s));
            }
        }
        let find = |c: char| index.get(&c).copied().ok_or(AlphabetError::MissingSymbol(c));
        let silence_id = find(SILENCE_SYMBOL)?;
        let rep2_id = find(REP2_SYMBOL)?;
        let rep3_id = find(REP3_SYMBOL)?;
        Ok(Self {
            symbols,
            index,
            silence_id,
            rep2_id,
            rep3_id,
        })
    }

    /// One symbol per line; the line number is the id.
    pub fn read<B: BufRead>(reader: B) -> Result<Self, AlphabetError> {
        let mut symbols = Vec::new();
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            let mut chars = line.chars();
            match (chars.next(), chars.next()) {
                (Some(c), None) => symbols.push(c),
                _ => {
                    return Err(AlphabetError::BadFile {
                        line: n + 1,
                        reason: format!("expected exactly one symbol, found {line:?}"),
                    })
                }
            }
        }
        Self::from_symbols(symbols)
    }

    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for s in &self.symbols {
            writeln!(w, "{s}")?;
        }
        Ok(())
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols(&self) -> &[char] {
        &self.symbols
    }

    pub fn symbol(&self, id: usize) -> Option<char> {
        self.symbols.get(id).copied()
    }

    pub fn id(&self, symbol: char) -> Option<usize> {
        self.index.get(&symbol).copied()
    }

    #[inline]
    pub fn silence_id(&self) -> usize {
        self.silence_id
    }

    #[inline]
    pub fn rep2_id(&self) -> usize {
        self.rep2_id
    }

    #[inline]
    pub fn rep3_id(&self) -> usize {
        self.rep3_id
    }

    #[inline]
    pub fn is_repetition(&self, id: usize) -> bool {
        id == self.rep2_id || id == self.rep3_id
    }

    /// True for ids that spell text directly (not silence, not a repetition label).
    #[inline]
    pub fn is_letter(&self, id: usize) -> bool {
        id < self.len() && id != self.silence_id && !self.is_repetition(id)
    }

    pub fn letter_ids(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|&i| self.is_letter(i))
    }

    /// Encodes `text`, lowercasing it and turning whitespace runs into one silence.
    /// Leading and trailing whitespace is dropped.
    pub fn encode(&self, text: &str) -> Result<LabelSequence, AlphabetError> {
        let mut ids = Vec::with_capacity(text.len());
        let mut run: Option<(usize, usize)> = None; // (letter id, run length)
        let mut pending_silence = false;

        let flush = |ids: &mut Vec<usize>, run: &mut Option<(usize, usize)>| {
            if let Some((id, mut n)) = run.take() {
                while n > 0 {
                    let chunk = n.min(3);
                    ids.push(id);
                    match chunk {
                        2 => ids.push(self.rep2_id),
                        3 => ids.push(self.rep3_id),
                        _ => {}
                    }
                    n -= chunk;
                }
            }
        };

        for (offset, ch) in text.char_indices() {
            if ch.is_whitespace() {
                flush(&mut ids, &mut run);
                pending_silence = !ids.is_empty();
                continue;
            }
            let lower = {
                let mut l = ch.to_lowercase();
                match (l.next(), l.next()) {
                    (Some(c), None) => c,
                    _ => return Err(AlphabetError::Unspellable { ch, offset }),
                }
            };
            let id = match self.index.get(&lower) {
                Some(&id) if self.is_letter(id) => id,
                _ => return Err(AlphabetError::Unspellable { ch, offset }),
            };
            if pending_silence {
                ids.push(self.silence_id);
                pending_silence = false;
            }
            match &mut run {
                Some((prev, n)) if *prev == id => *n += 1,
                _ => {
                    flush(&mut ids, &mut run);
                    run = Some((id, 1));
                }
            }
        }
        flush(&mut ids, &mut run);
        Ok(LabelSequence(ids))
    }

    /// Checks the sequence invariants and expands repetition labels back to text.
    pub fn decode(&self, labels: &[usize]) -> Result<String, AlphabetError> {
        let mut out = String::with_capacity(labels.len());
        let mut prev: Option<usize> = None;
        for (position, &id) in labels.iter().enumerate() {
            let ch = self.symbol(id).ok_or(AlphabetError::InvalidId {
                id,
                position,
                size: self.len(),
            })?;
            if self.is_repetition(id) {
                let base = match prev {
                    None => {
                        return Err(AlphabetError::Malformed {
                            position,
                            reason: "repetition label has no preceding letter",
                        })
                    }
                    Some(p) if self.is_repetition(p) => {
                        return Err(AlphabetError::Malformed {
                            position,
                            reason: "two adjacent repetition labels",
                        })
                    }
                    Some(p) if p == self.silence_id => {
                        return Err(AlphabetError::Malformed {
                            position,
                            reason: "repetition label after silence",
                        })
                    }
                    Some(p) => self.symbols[p],
                };
                let extra = if id == self.rep2_id { 1 } else { 2 };
                for _ in 0..extra {
                    out.push(base);
                }
            } else if id == self.silence_id {
                out.push(' ');
            } else {
                out.push(ch);
            }
            prev = Some(id);
        }
        Ok(out)
    }

    /// Like [`Alphabet::decode`] but drops repetition labels that have no letter to repeat.
    /// Used to read out unconstrained network predictions.
    pub fn decode_lossy(&self, labels: &[usize]) -> String {
        let mut cleaned = Vec::with_capacity(labels.len());
        for &id in labels {
            if id >= self.len() {
                continue;
            }
            if self.is_repetition(id) {
                match cleaned.last() {
                    Some(&p) if self.is_letter(p) => {}
                    _ => continue,
                }
            }
            cleaned.push(id);
        }
        self.decode(&cleaned).expect("cleaned sequence is well formed")
    }

    /// Merges consecutive duplicate frame labels: the label sequence a lattice path stands for.
    pub fn collapse_path(&self, frame_labels: &[usize]) -> LabelSequence {
        LabelSequence(collapse(frame_labels))
    }
}

pub(crate) fn collapse(frame_labels: &[usize]) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::with_capacity(frame_labels.len());
    for &l in frame_labels {
        if out.last() != Some(&l) {
            out.push(l);
        }
    }
    out
}

/// Encodes `text` with `alphabet`. Free-function form of [`Alphabet::encode`].
pub fn encode_transcription(text: &str, alphabet: &Alphabet) -> Result<LabelSequence, AlphabetError> {
    alphabet.encode(text)
}

pub fn decode_labels(labels: &LabelSequence, alphabet: &Alphabet) -> Result<String, AlphabetError> {
    alphabet.decode(labels.ids())
}

pub fn collapse_path(frame_labels: &[usize], alphabet: &Alphabet) -> LabelSequence {
    alphabet.collapse_path(frame_labels)
}

/// Ordered label ids of a transcription.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct LabelSequence(Vec<usize>);

impl LabelSequence {
    /// Wraps raw ids without validation.
    pub fn new(ids: Vec<usize>) -> Self {
        Self(ids)
    }

    /// Wraps ids after checking them against `alphabet`.
    pub fn validated(ids: Vec<usize>, alphabet: &Alphabet) -> Result<Self, AlphabetError> {
        alphabet.decode(&ids)?;
        Ok(Self(ids))
    }

    pub fn ids(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<usize> {
        self.0
    }
}

impl From<Vec<usize>> for LabelSequence {
    fn from(v: Vec<usize>) -> Self {
        Self(v)
    }
}

impl AsRef<[usize]> for LabelSequence {
    fn as_ref(&self) -> &[usize] {
        &self.0
    }
}

impl fmt::Display for LabelSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for id in &self.0 {
            if !first {
                f.write_str(" ")?;
            }
            write!(f, "{id}")?;
            first = false;
        }
        Ok(())
    }
}
