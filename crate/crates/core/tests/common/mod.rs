#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::PathBuf;

use letterspeech::alphabet::Alphabet;
use letterspeech::criterion::{EmissionTable, TransitionTable};
use letterspeech::lm::{build_lexicon, load_arpa, parse_arpa, LexiconTrie, NGramLm, OovPolicy};
use letterspeech::matrix::Matrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

pub fn random_emissions(rng: &mut ChaCha8Rng, frames: usize, labels: usize) -> EmissionTable<f64> {
    EmissionTable::new(Matrix::from_fn(frames, labels, |_, _| rng.gen_range(-2.0..2.0)))
}

pub fn random_transitions(rng: &mut ChaCha8Rng, labels: usize) -> TransitionTable<f64> {
    let g = Matrix::from_fn(labels, labels, |_, _| rng.gen_range(-1.0..1.0));
    let start = (0..labels).map(|_| rng.gen_range(-1.0..1.0)).collect();
    TransitionTable::new(g, start).unwrap()
}

/// Labels from `0..n` with no label repeated back to back.
pub fn labels_without_repeats(rng: &mut ChaCha8Rng, len: usize, n: usize) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::new();
    while out.len() < len {
        let l = rng.gen_range(0..n);
        if n == 1 || out.last() != Some(&l) {
            out.push(l);
        }
    }
    out
}

pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Calls `visit` on every label sequence of length `frames` over `0..labels`.
pub fn for_each_path(frames: usize, labels: usize, mut visit: impl FnMut(&[usize])) {
    let mut path = vec![0usize; frames];
    loop {
        visit(&path);
        let mut i = frames;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            path[i] += 1;
            if path[i] < labels {
                break;
            }
            path[i] = 0;
        }
    }
}

pub fn merge_repeats(path: &[usize]) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::new();
    for &l in path {
        if out.last() != Some(&l) {
            out.push(l);
        }
    }
    out
}

pub fn path_score(f: &EmissionTable<f64>, tr: Option<&TransitionTable<f64>>, path: &[usize]) -> f64 {
    let mut s = f.get(0, path[0]) + tr.map_or(0.0, |t| t.start(path[0]));
    for t in 1..path.len() {
        s += f.get(t, path[t]) + tr.map_or(0.0, |tr| tr.get(path[t - 1], path[t]));
    }
    s
}

/// Depth-first walk over every frame labelling, carrying the running score.
/// `visit` receives the score and the label path of each complete labelling.
fn walk(
    f: &EmissionTable<f64>,
    tr: Option<&TransitionTable<f64>>,
    path: &mut Vec<usize>,
    score: f64,
    visit: &mut dyn FnMut(f64, &[usize]),
) {
    let t = path.len();
    if t == f.frames() {
        visit(score, path);
        return;
    }
    for l in 0..f.labels() {
        let step = f.get(t, l)
            + match (tr, path.last()) {
                (Some(tr), Some(&p)) => tr.get(p, l),
                (Some(tr), None) => tr.start(l),
                (None, _) => 0.0,
            };
        path.push(l);
        walk(f, tr, path, score + step, visit);
        path.pop();
    }
}

/// ASG loss by enumerating every frame labelling. `labels` must not repeat back to back.
pub fn brute_asg(f: &EmissionTable<f64>, tr: &TransitionTable<f64>, labels: &[usize]) -> f64 {
    let mut all = Vec::new();
    let mut good = Vec::new();
    walk(f, Some(tr), &mut Vec::with_capacity(f.frames()), 0.0, &mut |s, p| {
        all.push(s);
        if merge_repeats(p) == labels {
            good.push(s);
        }
    });
    log_sum_exp(&all) - log_sum_exp(&good)
}

/// CTC loss by enumerating every frame labelling and applying the collapse map.
pub fn brute_ctc(f: &EmissionTable<f64>, labels: &[usize], blank: usize) -> f64 {
    let mut good = Vec::new();
    walk(f, None, &mut Vec::with_capacity(f.frames()), 0.0, &mut |s, p| {
        let collapsed: Vec<usize> = merge_repeats(p).into_iter().filter(|&l| l != blank).collect();
        if collapsed == labels {
            good.push(s);
        }
    });
    -log_sum_exp(&good)
}

/// Relative error with an absolute floor on the denominator.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

pub struct DecoderFixture {
    pub alphabet: Alphabet,
    pub lexicon: LexiconTrie,
    pub lm: NGramLm,
    pub arpa: String,
    pub emissions: EmissionTable<f64>,
    pub transitions: TransitionTable<f64>,
}

/// Random bigram ARPA over `words`.
pub fn random_bigram_arpa(rng: &mut ChaCha8Rng, words: &[String]) -> String {
    let mut uni: Vec<(String, f64, Option<f64>)> = vec![
        ("<s>".into(), -99.0, Some(rng.gen_range(-0.8..0.0))),
        ("</s>".into(), rng.gen_range(-1.5..-0.2), None),
    ];
    for w in words {
        uni.push((w.clone(), rng.gen_range(-1.5..-0.2), Some(rng.gen_range(-0.8..0.0))));
    }
    let mut contexts: Vec<String> = vec!["<s>".into()];
    contexts.extend(words.iter().cloned());
    let mut targets: Vec<String> = words.to_vec();
    targets.push("</s>".into());
    let mut bi = Vec::new();
    for c in &contexts {
        for t in &targets {
            if rng.gen_bool(0.4) {
                bi.push((c.clone(), t.clone(), rng.gen_range(-1.2..-0.05)));
            }
        }
    }
    let mut s = String::new();
    let _ = writeln!(s, "\\data\\\nngram 1={}\nngram 2={}\n\n\\1-grams:", uni.len(), bi.len());
    for (w, p, b) in &uni {
        match b {
            Some(b) => writeln!(s, "{p:.4}\t{w}\t{b:.4}"),
            None => writeln!(s, "{p:.4}\t{w}"),
        }
        .unwrap();
    }
    s.push_str("\n\\2-grams:\n");
    for (c, t, p) in &bi {
        let _ = writeln!(s, "{p:.4}\t{c} {t}");
    }
    s.push_str("\n\\end\\\n");
    s
}

/// Up to `max_vocab` distinct words over a, b, c with a random bigram model,
/// emissions over `frames` frames and random transitions.
pub fn decoder_fixture(rng: &mut ChaCha8Rng, max_vocab: usize, frames: usize) -> DecoderFixture {
    let alphabet = Alphabet::with_letters(&['a', 'b', 'c']).unwrap();
    let vocab = rng.gen_range(1..=max_vocab);
    let mut words: Vec<String> = Vec::new();
    while words.len() < vocab {
        let len = rng.gen_range(1..=3);
        let w: String = (0..len).map(|_| *['a', 'b', 'c'].choose(rng).unwrap()).collect();
        if !words.contains(&w) {
            words.push(w);
        }
    }
    let arpa = random_bigram_arpa(rng, &words);
    let lm = parse_arpa(arpa.as_bytes()).unwrap();
    let lexicon = build_lexicon(&words, &alphabet).unwrap();
    let emissions = random_emissions(rng, frames, alphabet.len());
    let transitions = random_transitions(rng, alphabet.len());
    DecoderFixture {
        alphabet,
        lexicon,
        lm,
        arpa,
        emissions,
        transitions,
    }
}

/// Label prefix of every trie node, by walking down from the root.
pub fn node_prefixes(trie: &LexiconTrie) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); trie.num_nodes()];
    let mut stack = vec![LexiconTrie::ROOT];
    while let Some(n) = stack.pop() {
        for (&l, &c) in trie.node(n).children() {
            let mut p = out[n].clone();
            p.push(l);
            out[c] = p;
            stack.push(c);
        }
    }
    out
}

/// Best unigram score among words spelled with `prefix`, computed without the trie.
pub fn brute_smear(trie: &LexiconTrie, lm: &NGramLm, prefix: &[usize]) -> f64 {
    (0..trie.num_words())
        .filter(|&w| trie.spelling(w).starts_with(prefix))
        .map(|w| lm.unigram(trie.word(w)).unwrap())
        .fold(f64::NEG_INFINITY, f64::max)
}

fn cond(lm: &NGramLm, context: &[&str], word: &str) -> f64 {
    let mut st = lm.null_state();
    for w in context {
        st = lm.score_word(&st, w).unwrap().1;
    }
    lm.score_word(&st, word).unwrap().0
}

/// (query, model value, hand-computed log10 value) on the committed fixtures.
#[allow(clippy::approx_constant)]
pub fn backoff_queries() -> Vec<(&'static str, f64, f64)> {
    let toy2 = load_arpa(data("toy2.arpa")).unwrap();
    let toy3 = load_arpa(data("toy3.arpa")).unwrap();
    let unk = toy3.clone().with_oov_policy(OovPolicy::Unk).unwrap();
    vec![
        ("bigram P(b | a)", cond(&toy2, &["a"], "b"), -0.30103),
        // unseen bigram: backoff(a) + P(c)
        ("bigram P(c | a)", cond(&toy2, &["a"], "c"), -0.1 - 0.5),
        (
            "bigram sentence a b c",
            toy2.sentence_logprob(&["a", "b", "c"]).unwrap(),
            -0.2 - 0.30103 - 0.4 - 0.15,
        ),
        ("trigram P(b | <s> a)", cond(&toy3, &["<s>", "a"], "b"), -0.1),
        ("trigram P(c | a b)", cond(&toy3, &["a", "b"], "c"), -0.25),
        // no "<s> a c": backoff(<s> a) + P(c | a)
        ("trigram P(c | <s> a)", cond(&toy3, &["<s>", "a"], "c"), -0.05 - 0.45),
        // no "a b a" and no "b a": backoff(a b) + backoff(b) + P(a)
        ("trigram P(a | a b)", cond(&toy3, &["a", "b"], "a"), -0.15 - 0.2 - 0.6),
        ("trigram P(</s> | a c)", cond(&toy3, &["a", "c"], "</s>"), -0.7),
        ("unk P(zzz | a)", cond(&unk, &["a"], "zzz"), -0.1 - 1.5),
        (
            "trigram empty sentence",
            toy3.sentence_logprob::<&str>(&[]).unwrap(),
            -0.5 - 1.2,
        ),
    ]
}
