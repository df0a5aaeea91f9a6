//! ARPA back-off n-gram models.
//!
//! Grammar accepted by [`parse_arpa`]:
//!
//! ```text
//! <anything not starting with \data\>
//! \data\
//! ngram 1=<count>
//! ...
//! ngram n=<count>
//! \1-grams:
//! <log10 prob> <w1> [<log10 backoff>]
//! ...
//! \n-grams:
//! <log10 prob> <w1> ... <wn>
//! \end\
//! ```
//!
//! Fields are separated by spaces or tabs, blank lines are ignored, and the
//! highest order carries no back-off weights. Every declared order must have
//! its section, and every word of a higher-order entry must be a unigram.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use indexmap::IndexMap;

use super::LmError;

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";

/// What to do with words missing from the unigram table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OovPolicy {
    #[default]
    Strict,
    /// Score unknown words as `<unk>`; needs a `<unk>` unigram.
    Unk,
}

/// Word ids of the last `n - 1` words: the context the next word is scored in.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct LmState(Vec<u32>);

impl LmState {
    pub fn words(&self) -> &[u32] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Entry {
    prob: f64,
    backoff: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NGramLm {
    vocab: IndexMap<String, u32>,
    /// `tables[k]` holds the (k+1)-grams in file order.
    tables: Vec<IndexMap<Vec<u32>, Entry>>,
    oov: OovPolicy,
}

fn parse_err(line: usize, reason: impl Into<String>) -> LmError {
    LmError::Parse {
        line,
        reason: reason.into(),
    }
}

fn parse_float(s: &str, line: usize, what: &str) -> Result<f64, LmError> {
    let v: f64 = s.parse().map_err(|_| parse_err(line, format!("bad {what} {s:?}")))?;
    if !v.is_finite() {
        return Err(parse_err(line, format!("{what} {s:?} is not finite")));
    }
    Ok(v)
}

enum Stage {
    Preamble,
    Data,
    Section { order: usize, header_line: usize },
    End,
}

/// Parses ARPA text. Errors carry the 1-based line number.
pub fn parse_arpa<B: BufRead>(reader: B) -> Result<NGramLm, LmError> {
    let mut stage = Stage::Preamble;
    let mut counts: Vec<Option<usize>> = Vec::new();
    let mut seen_sections: Vec<bool> = Vec::new();
    let mut lm = NGramLm {
        vocab: IndexMap::new(),
        tables: Vec::new(),
        oov: OovPolicy::Strict,
    };
    let mut last_line = 0;

    let close_section = |lm: &NGramLm, counts: &[Option<usize>], order: usize, header_line: usize| {
        let want = counts[order - 1].unwrap_or(0);
        let got = lm.tables[order - 1].len();
        if want != got {
            return Err(parse_err(
                header_line,
                format!("\\{order}-grams: declares {want} entries, found {got}"),
            ));
        }
        Ok(())
    };

    for (idx, raw) in reader.lines().enumerate() {
        let n = idx + 1;
        last_line = n;
        let raw = raw.map_err(LmError::from)?;
        let line = raw.trim();
        if matches!(stage, Stage::End) {
            continue;
        }
        if line.is_empty() {
            continue;
        }
        if line == "\\data\\" {
            if !matches!(stage, Stage::Preamble) {
                return Err(parse_err(n, "duplicate \\data\\"));
            }
            stage = Stage::Data;
            continue;
        }
        if matches!(stage, Stage::Preamble) {
            continue;
        }
        if line == "\\end\\" {
            if let Stage::Section { order, header_line } = stage {
                close_section(&lm, &counts, order, header_line)?;
            }
            if let Some(missing) = seen_sections.iter().position(|s| !s) {
                return Err(parse_err(n, format!("missing \\{}-grams: section", missing + 1)));
            }
            if counts.is_empty() {
                return Err(parse_err(n, "no ngram counts declared"));
            }
            stage = Stage::End;
            continue;
        }
        if let Some(rest) = line.strip_prefix('\\') {
            let order: usize = rest
                .strip_suffix("-grams:")
                .and_then(|o| o.parse().ok())
                .ok_or_else(|| parse_err(n, format!("unknown section header {line:?}")))?;
            if counts.is_empty() {
                return Err(parse_err(n, "section before any ngram counts"));
            }
            if order == 0 || order > counts.len() {
                return Err(parse_err(
                    n,
                    format!("order {order} exceeds declared order {}", counts.len()),
                ));
            }
            if seen_sections[order - 1] {
                return Err(parse_err(n, format!("duplicate \\{order}-grams: section")));
            }
            if let Stage::Section {
                order: prev,
                header_line,
            } = stage
            {
                close_section(&lm, &counts, prev, header_line)?;
            }
            if order > 1 && !seen_sections[0] {
                return Err(parse_err(n, "higher-order section before \\1-grams:"));
            }
            seen_sections[order - 1] = true;
            stage = Stage::Section { order, header_line: n };
            continue;
        }
        match stage {
            Stage::Data => {
                let spec = line
                    .strip_prefix("ngram ")
                    .ok_or_else(|| parse_err(n, format!("expected `ngram N=count`, found {line:?}")))?;
                let (o, c) = spec
                    .split_once('=')
                    .ok_or_else(|| parse_err(n, format!("expected `ngram N=count`, found {line:?}")))?;
                let o: usize = o.trim().parse().map_err(|_| parse_err(n, format!("bad order {o:?}")))?;
                let c: usize = c.trim().parse().map_err(|_| parse_err(n, format!("bad count {c:?}")))?;
                if o == 0 {
                    return Err(parse_err(n, "order 0"));
                }
                if counts.len() < o {
                    counts.resize(o, None);
                    seen_sections.resize(o, false);
                    lm.tables.resize_with(o, IndexMap::new);
                }
                if counts[o - 1].replace(c).is_some() {
                    return Err(parse_err(n, format!("order {o} declared twice")));
                }
            }
            Stage::Section { order, .. } => {
                if let Some(o) = counts.iter().position(Option::is_none) {
                    return Err(parse_err(n, format!("no count declared for order {}", o + 1)));
                }
                let fields: Vec<&str> = line.split_whitespace().collect();
                let highest = order == counts.len();
                let ok_len = fields.len() == order + 1 || (!highest && fields.len() == order + 2);
                if !ok_len {
                    return Err(parse_err(
                        n,
                        format!("{}-gram entry has {} fields", order, fields.len()),
                    ));
                }
                let prob = parse_float(fields[0], n, "probability")?;
                if prob > 0.0 {
                    return Err(parse_err(n, format!("log10 probability {prob} is positive")));
                }
                let backoff = match fields.get(order + 1) {
                    Some(s) => Some(parse_float(s, n, "backoff")?),
                    None => None,
                };
                let words = &fields[1..=order];
                let key: Vec<u32> = if order == 1 {
                    let next = lm.vocab.len() as u32;
                    if lm.vocab.insert(words[0].to_string(), next).is_some() {
                        return Err(parse_err(n, format!("duplicate unigram {:?}", words[0])));
                    }
                    vec![next]
                } else {
                    words
                        .iter()
                        .map(|w| {
                            lm.vocab
                                .get(*w)
                                .copied()
                                .ok_or_else(|| parse_err(n, format!("word {w:?} has no unigram")))
                        })
                        .collect::<Result<_, _>>()?
                };
                if lm.tables[order - 1].insert(key, Entry { prob, backoff }).is_some() {
                    return Err(parse_err(n, format!("duplicate {order}-gram {:?}", words.join(" "))));
                }
            }
            Stage::Preamble | Stage::End => unreachable!(),
        }
    }
    match stage {
        Stage::End => Ok(lm),
        Stage::Preamble => Err(parse_err(last_line, "no \\data\\ section")),
        _ => Err(parse_err(last_line, "missing \\end\\")),
    }
}

pub fn load_arpa(path: impl AsRef<Path>) -> Result<NGramLm, LmError> {
    parse_arpa(BufReader::new(fs::File::open(path)?))
}

impl NGramLm {
    pub fn with_oov_policy(mut self, policy: OovPolicy) -> Result<Self, LmError> {
        if policy == OovPolicy::Unk && !self.vocab.contains_key(UNK) {
            return Err(LmError::NoUnk);
        }
        self.oov = policy;
        Ok(self)
    }

    pub fn oov_policy(&self) -> OovPolicy {
        self.oov
    }

    pub fn order(&self) -> usize {
        self.tables.len()
    }

    /// Number of unigram entries, sentinels included.
    pub fn num_entries(&self) -> usize {
        self.vocab.len()
    }

    /// Vocabulary size without `<s>`, `</s>` and `<unk>`.
    pub fn vocab_size(&self) -> usize {
        self.vocab
            .keys()
            .filter(|w| !matches!(w.as_str(), BOS | EOS | UNK))
            .count()
    }

    pub fn ngram_count(&self, order: usize) -> usize {
        self.tables.get(order.wrapping_sub(1)).map_or(0, IndexMap::len)
    }

    pub fn word_id(&self, word: &str) -> Option<u32> {
        self.vocab.get(word).copied()
    }

    pub fn word(&self, id: u32) -> Option<&str> {
        self.vocab.get_index(id as usize).map(|(w, _)| w.as_str())
    }

    /// Id used for `word`, after applying the OOV policy.
    pub fn resolve(&self, word: &str) -> Result<u32, LmError> {
        match (self.word_id(word), self.oov) {
            (Some(id), _) => Ok(id),
            (None, OovPolicy::Unk) => Ok(self.vocab[UNK]),
            (None, OovPolicy::Strict) => Err(LmError::Oov(word.to_string())),
        }
    }

    /// Empty context.
    pub fn null_state(&self) -> LmState {
        LmState::default()
    }

    /// Context holding only `<s>` (empty for a unigram model or one without `<s>`).
    pub fn begin_state(&self) -> LmState {
        match self.word_id(BOS) {
            Some(id) if self.order() > 1 => LmState(vec![id]),
            _ => LmState::default(),
        }
    }

    fn backoff(&self, context: &[u32]) -> f64 {
        if context.is_empty() {
            return 0.0;
        }
        self.tables
            .get(context.len() - 1)
            .and_then(|t| t.get(context))
            .and_then(|e| e.backoff)
            .unwrap_or(0.0)
    }

    /// Katz back-off score (log10) of word id `w` after `state`, and the next state.
    pub fn score_id(&self, state: &LmState, w: u32) -> (f64, LmState) {
        let ctx = state.words();
        let max_ctx = ctx.len().min(self.order() - 1);
        let mut acc = 0.0;
        let mut key: Vec<u32> = Vec::with_capacity(max_ctx + 1);
        let mut prob = None;
        for k in (0..=max_ctx).rev() {
            let c = &ctx[ctx.len() - k..];
            key.clear();
            key.extend_from_slice(c);
            key.push(w);
            if let Some(e) = self.tables[k].get(&key) {
                prob = Some(e.prob);
                break;
            }
            acc += self.backoff(c);
        }
        let p = prob.expect("resolved ids always have a unigram");
        let mut next: Vec<u32> = ctx[ctx.len() - max_ctx..].to_vec();
        next.push(w);
        let keep = self.order() - 1;
        let next = next[next.len().saturating_sub(keep)..].to_vec();
        (acc + p, LmState(next))
    }

    pub fn score_word(&self, state: &LmState, word: &str) -> Result<(f64, LmState), LmError> {
        Ok(self.score_id(state, self.resolve(word)?))
    }

    /// Unigram log10 probability of `word` (after the OOV policy).
    pub fn unigram(&self, word: &str) -> Result<f64, LmError> {
        Ok(self.score_word(&self.null_state(), word)?.0)
    }

    /// `log10 P(w1..wk </s> | <s>)`.
    pub fn sentence_logprob<S: AsRef<str>>(&self, words: &[S]) -> Result<f64, LmError> {
        let mut state = self.begin_state();
        let mut total = 0.0;
        for w in words {
            let (p, s) = self.score_word(&state, w.as_ref())?;
            total += p;
            state = s;
        }
        let eos = self.word_id(EOS).ok_or_else(|| LmError::Oov(EOS.to_string()))?;
        Ok(total + self.score_id(&state, eos).0)
    }

    /// Score of `</s>` after `state`, or 0 when the model has no `</s>`.
    pub fn end_score(&self, state: &LmState) -> f64 {
        match self.word_id(EOS) {
            Some(eos) => self.score_id(state, eos).0,
            None => 0.0,
        }
    }

    /// ARPA text that parses back to an identical model.
    pub fn to_arpa(&self) -> String {
        let mut s = String::from("\\data\\\n");
        for (k, t) in self.tables.iter().enumerate() {
            let _ = writeln!(s, "ngram {}={}", k + 1, t.len());
        }
        for (k, t) in self.tables.iter().enumerate() {
            let _ = write!(s, "\n\\{}-grams:\n", k + 1);
            for (key, e) in t {
                let _ = write!(s, "{}", e.prob);
                for &w in key {
                    let _ = write!(s, "\t{}", self.word(w).expect("ids come from vocab"));
                }
                if let Some(b) = e.backoff {
                    let _ = write!(s, "\t{b}");
                }
                s.push('\n');
            }
        }
        s.push_str("\n\\end\\\n");
        s
    }

    pub fn write_arpa<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(self.to_arpa().as_bytes())
    }

    pub fn save_arpa(&self, path: impl AsRef<Path>) -> Result<(), LmError> {
        fs::write(path, self.to_arpa())?;
        Ok(())
    }

    /// Word ids of all unigrams, in file order.
    pub fn words(&self) -> impl Iterator<Item = (&str, u32)> {
        self.vocab.iter().map(|(w, &i)| (w.as_str(), i))
    }

    /// Every stored n-gram as (words, prob, backoff).
    pub fn entries(&self) -> Vec<(Vec<&str>, f64, Option<f64>)> {
        let mut out = Vec::new();
        for t in &self.tables {
            for (k, e) in t {
                out.push((k.iter().map(|&w| self.word(w).unwrap()).collect(), e.prob, e.backoff));
            }
        }
        out
    }

    /// Per-order number of contexts that have successors but no stored back-off.
    #[doc(hidden)]
    pub fn implicit_backoffs(&self) -> Vec<usize> {
        let mut ctx: HashMap<&[u32], ()> = HashMap::new();
        for t in self.tables.iter().skip(1) {
            for k in t.keys() {
                ctx.insert(&k[..k.len() - 1], ());
            }
        }
        let mut out = vec![0; self.order()];
        for c in ctx.keys() {
            let has = self.tables[c.len() - 1].get(*c).and_then(|e| e.backoff).is_some();
            if !has {
                out[c.len() - 1] += 1;
            }
        }
        out
    }
}
