use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use super::{LmError, NGramLm};
use crate::alphabet::Alphabet;

/// How subtree scores are combined when smearing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SmearMode {
    #[default]
    Max,
    /// log10 of the summed probabilities.
    LogAdd,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrieNode {
    children: BTreeMap<usize, usize>,
    words: Vec<usize>,
    smeared: f64,
}

impl TrieNode {
    /// Child node index per label id, in label order.
    pub fn children(&self) -> &BTreeMap<usize, usize> {
        &self.children
    }

    /// Lexicon word indices spelled exactly by the path to this node.
    pub fn words(&self) -> &[usize] {
        &self.words
    }

    /// Smeared log10 LM score; 0 before [`smear`] is applied.
    pub fn smeared(&self) -> f64 {
        self.smeared
    }
}

/// Prefix tree over repetition-encoded spellings. Node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct LexiconTrie {
    nodes: Vec<TrieNode>,
    words: Vec<String>,
    spellings: Vec<Vec<usize>>,
}

impl LexiconTrie {
    pub const ROOT: usize = 0;

    fn empty() -> Self {
        Self {
            nodes: vec![TrieNode::default()],
            words: Vec::new(),
            spellings: Vec::new(),
        }
    }

    fn insert(&mut self, word: String, spelling: Vec<usize>) {
        let mut node = Self::ROOT;
        for &l in &spelling {
            node = match self.nodes[node].children.get(&l) {
                Some(&c) => c,
                None => {
                    let c = self.nodes.len();
                    self.nodes.push(TrieNode::default());
                    self.nodes[node].children.insert(l, c);
                    c
                }
            };
        }
        self.nodes[node].words.push(self.words.len());
        self.words.push(word);
        self.spellings.push(spelling);
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn num_words(&self) -> usize {
        self.words.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn node(&self, i: usize) -> &TrieNode {
        &self.nodes[i]
    }

    pub fn child(&self, node: usize, label: usize) -> Option<usize> {
        self.nodes[node].children.get(&label).copied()
    }

    pub fn word(&self, i: usize) -> &str {
        &self.words[i]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn spelling(&self, i: usize) -> &[usize] {
        &self.spellings[i]
    }

    /// Node reached by `spelling`, if any.
    pub fn find(&self, spelling: &[usize]) -> Option<usize> {
        spelling.iter().try_fold(Self::ROOT, |n, &l| self.child(n, l))
    }

    /// Words whose spelling passes through `node`.
    pub fn subtree_words(&self, node: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![node];
        while let Some(n) = stack.pop() {
            out.extend_from_slice(&self.nodes[n].words);
            stack.extend(self.nodes[n].children.values());
        }
        out.sort_unstable();
        out
    }

    /// `word<TAB>spelling symbols separated by spaces`, one line per word.
    pub fn write<W: Write>(&self, mut w: W, alphabet: &Alphabet) -> std::io::Result<()> {
        for (word, sp) in self.words.iter().zip(&self.spellings) {
            let sym: Vec<String> = sp
                .iter()
                .map(|&l| alphabet.symbol(l).expect("spelling ids are valid").to_string())
                .collect();
            writeln!(w, "{word}\t{}", sym.join(" "))?;
        }
        Ok(())
    }
}

fn check_spelling(word: &str, spelling: &[usize], alphabet: &Alphabet) -> Result<(), LmError> {
    if spelling.is_empty() {
        return Err(LmError::Lexicon(format!("word {word:?} has an empty spelling")));
    }
    if spelling.contains(&alphabet.silence_id()) {
        return Err(LmError::Lexicon(format!("word {word:?} spells a silence")));
    }
    alphabet
        .decode(spelling)
        .map_err(|e| LmError::Lexicon(format!("word {word:?}: {e}")))?;
    Ok(())
}

/// Spells every word with the alphabet's repetition encoding.
pub fn build_lexicon<S: AsRef<str>>(words: &[S], alphabet: &Alphabet) -> Result<LexiconTrie, LmError> {
    let mut trie = LexiconTrie::empty();
    for w in words {
        let w = w.as_ref();
        let spelling = alphabet
            .encode(w)
            .map_err(|e| LmError::Lexicon(format!("word {w:?}: {e}")))?
            .into_vec();
        check_spelling(w, &spelling, alphabet)?;
        trie.insert(w.to_string(), spelling);
    }
    Ok(trie)
}

/// Reads `word<TAB>symbols` lines. Blank lines are skipped.
pub fn read_lexicon<B: BufRead>(reader: B, alphabet: &Alphabet) -> Result<LexiconTrie, LmError> {
    let mut trie = LexiconTrie::empty();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| LmError::Parse { line: i + 1, reason };
        let (word, spelling) = line
            .split_once('\t')
            .ok_or_else(|| bad("expected word<TAB>spelling".into()))?;
        let ids: Vec<usize> = spelling
            .split_whitespace()
            .map(|s| {
                let mut cs = s.chars();
                match (cs.next(), cs.next()) {
                    (Some(c), None) => alphabet.id(c).ok_or_else(|| bad(format!("unknown symbol {c:?}"))),
                    _ => Err(bad(format!("symbol {s:?} is not one character"))),
                }
            })
            .collect::<Result<_, _>>()?;
        check_spelling(word, &ids, alphabet).map_err(|e| bad(e.to_string()))?;
        trie.insert(word.to_string(), ids);
    }
    Ok(trie)
}

pub fn load_lexicon(path: impl AsRef<Path>, alphabet: &Alphabet) -> Result<LexiconTrie, LmError> {
    read_lexicon(BufReader::new(fs::File::open(path)?), alphabet)
}

fn log10_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (10f64.powf(lo - hi)).ln_1p() / std::f64::consts::LN_10
}

/// Sets each node's score to the best (or summed) unigram score of the words below it.
pub fn smear(trie: &LexiconTrie, lm: &NGramLm, mode: SmearMode) -> Result<LexiconTrie, LmError> {
    let scores: Vec<f64> = trie.words.iter().map(|w| lm.unigram(w)).collect::<Result<_, _>>()?;
    let mut out = trie.clone();
    let combine = |a: f64, b: f64| match mode {
        SmearMode::Max => a.max(b),
        SmearMode::LogAdd => log10_add(a, b),
    };
    // children always have larger indices than their parents
    for n in (0..out.nodes.len()).rev() {
        let mut v = f64::NEG_INFINITY;
        for &w in &out.nodes[n].words {
            v = combine(v, scores[w]);
        }
        let kids: Vec<usize> = out.nodes[n].children.values().copied().collect();
        for c in kids {
            v = combine(v, out.nodes[c].smeared);
        }
        out.nodes[n].smeared = v;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shared_prefix_and_repetitions() {
        let a = Alphabet::default();
        let t = build_lexicon(&["cat", "cab", "ball"], &a).unwrap();
        let ca = t.find(&a.encode("ca").unwrap().into_vec()).unwrap();
        assert_eq!(t.node(ca).children().len(), 2);
        let ids = |s: &str| s.chars().map(|c| a.id(c).unwrap()).collect::<Vec<_>>();
        let ball = t.find(&ids("bal2")).unwrap();
        assert_eq!(t.node(ball).words(), &[2]);
        assert!(t.find(&ids("ball")).is_none());
        assert_eq!(t.num_nodes(), 1 + 4 + 4);
    }

    #[test]
    fn empty_and_bad_words() {
        let a = Alphabet::default();
        assert!(build_lexicon::<&str>(&[], &a).unwrap().is_empty());
        assert!(build_lexicon(&["a b"], &a).is_err());
        assert!(build_lexicon(&["x1"], &a).is_err());
        assert!(build_lexicon(&[""], &a).is_err());
    }

    #[test]
    fn file_round_trip() {
        let a = Alphabet::default();
        let t = build_lexicon(&["hello", "help", "aaa", "it's"], &a).unwrap();
        let mut buf = Vec::new();
        t.write(&mut buf, &a).unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap().lines().next(),
            Some("hello\th e l 2 o")
        );
        assert_eq!(read_lexicon(buf.as_slice(), &a).unwrap(), t);
        assert!(matches!(
            read_lexicon("ok\to k\nbad line\n".as_bytes(), &a),
            Err(LmError::Parse { line: 2, .. })
        ));
        assert!(read_lexicon("x\t2 a\n".as_bytes(), &a).is_err());
    }

    #[test]
    fn log10_add_matches_direct_sum() {
        let v = log10_add(-1.0, -2.0);
        assert!((v - (0.1f64 + 0.01).log10()).abs() < 1e-12);
        assert_eq!(log10_add(f64::NEG_INFINITY, -3.0), -3.0);
    }
}
