//! Forward, backward and Viterbi recursions over an [`UnfoldedGraph`].

use super::graph::UnfoldedGraph;
use super::logadd::logadd2;
use super::{CriterionError, EmissionTable, TransitionTable};
use crate::matrix::Matrix;
use crate::scalar::Real;

/// How scores of converging paths combine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Mode {
    /// Log-sum-exp: the Forward algorithm.
    #[default]
    LogAdd,
    /// Maximum: the Viterbi algorithm.
    Max,
}

impl Mode {
    #[inline]
    fn combine<R: Real>(self, a: R, b: R) -> R {
        match self {
            Mode::LogAdd => {
                if a == R::neg_infinity() {
                    b
                } else {
                    logadd2(a, b)
                }
            }
            Mode::Max => a.max(b),
        }
    }
}

/// Per-state forward scores (flat, aligned with the graph's state indices) and the total.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTable<R> {
    pub score: R,
    pub alpha: Vec<R>,
}

fn validate<R: Real>(
    g: &UnfoldedGraph,
    f: &EmissionTable<R>,
    tr: Option<&TransitionTable<R>>,
) -> Result<(), CriterionError> {
    if g.frames() != f.frames() {
        return Err(CriterionError::Shape(format!(
            "graph has {} frames, emissions {}",
            g.frames(),
            f.frames()
        )));
    }
    if g.max_label() >= f.labels() {
        return Err(CriterionError::LabelOutOfRange {
            label: g.max_label(),
            labels: f.labels(),
        });
    }
    if let Some(tr) = tr {
        super::check_shapes(f, tr)?;
    }
    Ok(())
}

#[inline]
fn edge<R: Real>(tr: Option<&TransitionTable<R>>, from: usize, to: usize) -> R {
    tr.map_or(R::zero(), |tr| tr.get(from, to))
}

#[inline]
fn start<R: Real>(tr: Option<&TransitionTable<R>>, label: usize) -> R {
    tr.map_or(R::zero(), |tr| tr.start(label))
}

pub(crate) fn alpha<R: Real>(
    g: &UnfoldedGraph,
    f: &EmissionTable<R>,
    tr: Option<&TransitionTable<R>>,
    mode: Mode,
) -> ForwardTable<R> {
    let mut alpha = vec![R::neg_infinity(); g.num_states()];
    for s in g.frame_states(0) {
        let l = g.label(s);
        alpha[s] = f.get(0, l) + start(tr, l);
    }
    for t in 1..g.frames() {
        let row = f.scores().row(t);
        for s in g.frame_states(t) {
            let l = g.label(s);
            let mut acc = R::neg_infinity();
            for &p in g.preds(s) {
                let p = p as usize;
                acc = mode.combine(acc, alpha[p] + edge(tr, g.label(p), l));
            }
            alpha[s] = acc + row[l];
        }
    }
    let score = g
        .accepting()
        .iter()
        .fold(R::neg_infinity(), |acc, &s| mode.combine(acc, alpha[s as usize]));
    ForwardTable { score, alpha }
}

/// Backward scores: logadd over completions, excluding the state's own emission.
pub(crate) fn beta<R: Real>(g: &UnfoldedGraph, f: &EmissionTable<R>, tr: Option<&TransitionTable<R>>) -> Vec<R> {
    let mut beta = vec![R::neg_infinity(); g.num_states()];
    for &s in g.accepting() {
        beta[s as usize] = R::zero();
    }
    for t in (1..g.frames()).rev() {
        let row = f.scores().row(t);
        for s in g.frame_states(t) {
            let l = g.label(s);
            let tail = beta[s] + row[l];
            for &p in g.preds(s) {
                let p = p as usize;
                beta[p] = Mode::LogAdd.combine(beta[p], tail + edge(tr, g.label(p), l));
            }
        }
    }
    beta
}

/// Adds `scale * posterior` of every state and edge into the gradient buffers.
#[allow(clippy::too_many_arguments)]
pub(crate) fn accumulate_posteriors<R: Real>(
    g: &UnfoldedGraph,
    f: &EmissionTable<R>,
    tr: Option<&TransitionTable<R>>,
    alpha: &[R],
    beta: &[R],
    total: R,
    scale: R,
    d_emissions: &mut Matrix<R>,
    mut d_trans: Option<(&mut Matrix<R>, &mut [R])>,
) {
    for t in 0..g.frames() {
        let row = f.scores().row(t);
        for s in g.frame_states(t) {
            let l = g.label(s);
            let post = (alpha[s] + beta[s] - total).exp();
            d_emissions[(t, l)] += scale * post;
            if let Some((d_g, d_start)) = d_trans.as_mut() {
                if t == 0 {
                    d_start[l] += scale * post;
                } else {
                    let tail = row[l] + beta[s] - total;
                    for &p in g.preds(s) {
                        let p = p as usize;
                        let lp = g.label(p);
                        let w = (alpha[p] + edge(tr, lp, l) + tail).exp();
                        d_g[(lp, l)] += scale * w;
                    }
                }
            }
        }
    }
}

/// Forward table in the chosen mode.
pub fn forward_table<R: Real>(
    g: &UnfoldedGraph,
    f: &EmissionTable<R>,
    tr: &TransitionTable<R>,
    mode: Mode,
) -> Result<ForwardTable<R>, CriterionError> {
    validate(g, f, Some(tr))?;
    Ok(alpha(g, f, Some(tr), mode))
}

/// Score of all accepted paths combined with `mode`.
pub fn forward_score<R: Real>(
    g: &UnfoldedGraph,
    f: &EmissionTable<R>,
    tr: &TransitionTable<R>,
    mode: Mode,
) -> Result<R, CriterionError> {
    forward_table(g, f, tr, mode).map(|t| t.score)
}

/// Best accepted path (frame labels) and its score.
///
/// Ties go to the predecessor, or final state, with the lowest template index.
pub fn viterbi<R: Real>(
    g: &UnfoldedGraph,
    f: &EmissionTable<R>,
    tr: &TransitionTable<R>,
) -> Result<(Vec<usize>, R), CriterionError> {
    validate(g, f, Some(tr))?;
    let n = g.num_states();
    let mut score = vec![R::neg_infinity(); n];
    let mut back = vec![u32::MAX; n];
    for s in g.frame_states(0) {
        let l = g.label(s);
        score[s] = f.get(0, l) + tr.start(l);
    }
    for t in 1..g.frames() {
        for s in g.frame_states(t) {
            let l = g.label(s);
            let mut best = R::neg_infinity();
            let mut arg = u32::MAX;
            for &p in g.preds(s) {
                let v = score[p as usize] + tr.get(g.label(p as usize), l);
                if arg == u32::MAX || v > best {
                    best = v;
                    arg = p;
                }
            }
            score[s] = best + f.get(t, l);
            back[s] = arg;
        }
    }
    let mut best = R::neg_infinity();
    let mut cur = u32::MAX;
    for &s in g.accepting() {
        if cur == u32::MAX || score[s as usize] > best {
            best = score[s as usize];
            cur = s;
        }
    }
    let mut path = vec![0usize; g.frames()];
    for t in (0..g.frames()).rev() {
        let s = cur as usize;
        path[t] = g.label(s);
        cur = back[s];
    }
    Ok((path, best))
}
