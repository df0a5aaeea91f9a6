use std::collections::VecDeque;
use std::ops::Range;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("transcription needs at least {min_frames} frames, only {frames} available")]
    Infeasible { min_frames: usize, frames: usize },
    #[error("graph accepts no path")]
    Empty,
    #[error("a lattice needs at least one frame")]
    NoFrames,
    #[error("a lattice needs at least one label")]
    NoLabels,
}

/// Template graph over labels: each state carries a label, edges say which
/// state may follow which at the next frame (self-loops are explicit).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LabelGraph {
    labels: Vec<usize>,
    succ: Vec<Vec<usize>>,
    initial: Vec<bool>,
    accepting: Vec<bool>,
}

impl LabelGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a state with the given label and returns its index.
    pub fn add_state(&mut self, label: usize, initial: bool, accepting: bool) -> usize {
        self.labels.push(label);
        self.succ.push(Vec::new());
        self.initial.push(initial);
        self.accepting.push(accepting);
        self.labels.len() - 1
    }

    pub fn add_edge(&mut self, from: usize, to: usize) {
        if !self.succ[from].contains(&to) {
            self.succ[from].push(to);
        }
    }

    pub fn set_initial(&mut self, state: usize, initial: bool) {
        self.initial[state] = initial;
    }

    pub fn set_accepting(&mut self, state: usize, accepting: bool) {
        self.accepting[state] = accepting;
    }

    pub fn num_states(&self) -> usize {
        self.labels.len()
    }

    pub fn label(&self, state: usize) -> usize {
        self.labels[state]
    }

    pub fn successors(&self, state: usize) -> &[usize] {
        &self.succ[state]
    }

    pub fn is_initial(&self, state: usize) -> bool {
        self.initial[state]
    }

    pub fn is_accepting(&self, state: usize) -> bool {
        self.accepting[state]
    }

    /// CTC graph: `blank l1 blank l2 ... lN blank`. Blanks may be skipped
    /// except between two identical labels.
    pub fn ctc(labels: &[usize], blank: usize) -> Self {
        let mut g = Self::new();
        let n = labels.len();
        let mut prev_blank = g.add_state(blank, true, n == 0);
        g.add_edge(prev_blank, prev_blank);
        let mut prev_label: Option<usize> = None;
        for (k, &l) in labels.iter().enumerate() {
            let last = k + 1 == n;
            let s = g.add_state(l, k == 0, last);
            g.add_edge(s, s);
            g.add_edge(prev_blank, s);
            if let Some(p) = prev_label {
                if g.label(p) != l {
                    g.add_edge(p, s);
                }
            }
            let b = g.add_state(blank, false, last);
            g.add_edge(b, b);
            g.add_edge(s, b);
            prev_blank = b;
            prev_label = Some(s);
        }
        g
    }

    /// ASG graph: the transcription labels in order, each repeated or advanced.
    pub fn asg(labels: &[usize]) -> Self {
        let mut g = Self::new();
        let n = labels.len();
        for (k, &l) in labels.iter().enumerate() {
            let s = g.add_state(l, k == 0, k + 1 == n);
            g.add_edge(s, s);
            if k > 0 {
                g.add_edge(s - 1, s);
            }
        }
        g
    }

    /// Fully connected graph over `num_labels` labels.
    pub fn full(num_labels: usize) -> Self {
        let mut g = Self::new();
        for l in 0..num_labels {
            g.add_state(l, true, true);
        }
        for i in 0..num_labels {
            for j in 0..num_labels {
                g.add_edge(i, j);
            }
        }
        g
    }

    /// Fewest frames any accepted path needs, if any path exists.
    pub fn min_frames(&self) -> Option<usize> {
        let mut dist = vec![usize::MAX; self.num_states()];
        let mut queue = VecDeque::new();
        for (s, d) in dist.iter_mut().enumerate() {
            if self.initial[s] {
                *d = 1;
                queue.push_back(s);
            }
        }
        while let Some(s) = queue.pop_front() {
            if self.accepting[s] {
                return Some(dist[s]);
            }
            for &n in &self.succ[s] {
                if dist[n] == usize::MAX {
                    dist[n] = dist[s] + 1;
                    queue.push_back(n);
                }
            }
        }
        None
    }

    /// Unfolds the template over `frames` frames, keeping only states that lie
    /// on at least one accepted path.
    pub fn unfold(&self, frames: usize) -> Result<UnfoldedGraph, GraphError> {
        if frames == 0 {
            return Err(GraphError::NoFrames);
        }
        let ns = self.num_states();
        let infeasible = || match self.min_frames() {
            Some(min_frames) => GraphError::Infeasible { min_frames, frames },
            None => GraphError::Empty,
        };
        if ns == 0 {
            return Err(infeasible());
        }

        let mut pred: Vec<Vec<usize>> = vec![Vec::new(); ns];
        for s in 0..ns {
            for &n in &self.succ[s] {
                pred[n].push(s);
            }
        }
        for p in &mut pred {
            p.sort_unstable();
        }
        let (pred_off, pred_flat) = flatten(&pred);
        let (succ_off, succ_flat) = flatten(&self.succ);

        // forward reachability
        let mut reach = vec![false; frames * ns];
        reach[..ns].copy_from_slice(&self.initial);
        for t in 1..frames {
            let (before, cur) = reach.split_at_mut(t * ns);
            let prev = &before[(t - 1) * ns..];
            for (s, r) in cur[..ns].iter_mut().enumerate() {
                *r = pred_flat[pred_off[s]..pred_off[s + 1]].iter().any(|&p| prev[p]);
            }
        }
        // backward co-reachability
        let mut alive = vec![false; frames * ns];
        for s in 0..ns {
            alive[(frames - 1) * ns + s] = reach[(frames - 1) * ns + s] && self.accepting[s];
        }
        for t in (0..frames - 1).rev() {
            let (cur, after) = alive.split_at_mut((t + 1) * ns);
            let next = &after[..ns];
            let reach_t = &reach[t * ns..(t + 1) * ns];
            for (s, a) in cur[t * ns..].iter_mut().enumerate() {
                *a = reach_t[s] && succ_flat[succ_off[s]..succ_off[s + 1]].iter().any(|&n| next[n]);
            }
        }
        if !alive[..ns].iter().any(|&a| a) {
            return Err(infeasible());
        }

        let live = alive.iter().filter(|&&a| a).count();
        let mut pred_offsets = Vec::with_capacity(live + 1);
        pred_offsets.push(0);
        let mut g = UnfoldedGraph {
            frames,
            frame_offsets: Vec::with_capacity(frames + 1),
            template: Vec::with_capacity(live),
            labels: Vec::with_capacity(live),
            pred_offsets,
            preds: Vec::with_capacity(live * (pred_flat.len() / ns + 1)),
            accepting: Vec::new(),
        };
        // global index of template state s at the previous frame
        let mut prev_index = vec![u32::MAX; ns];
        let mut cur_index = vec![u32::MAX; ns];
        for t in 0..frames {
            g.frame_offsets.push(g.template.len());
            cur_index.fill(u32::MAX);
            for s in 0..ns {
                if !alive[t * ns + s] {
                    continue;
                }
                let idx = g.template.len() as u32;
                cur_index[s] = idx;
                g.template.push(s as u32);
                g.labels.push(self.labels[s] as u32);
                if t > 0 {
                    for &p in &pred_flat[pred_off[s]..pred_off[s + 1]] {
                        let pi = prev_index[p];
                        if pi != u32::MAX {
                            g.preds.push(pi);
                        }
                    }
                }
                g.pred_offsets.push(g.preds.len());
                if t + 1 == frames && self.accepting[s] {
                    g.accepting.push(idx);
                }
            }
            std::mem::swap(&mut prev_index, &mut cur_index);
        }
        g.frame_offsets.push(g.template.len());
        Ok(g)
    }
}

fn flatten(lists: &[Vec<usize>]) -> (Vec<usize>, Vec<usize>) {
    let mut off = Vec::with_capacity(lists.len() + 1);
    off.push(0);
    let mut flat = Vec::new();
    for l in lists {
        flat.extend_from_slice(l);
        off.push(flat.len());
    }
    (off, flat)
}

/// A template graph unfolded over `T` frames.
///
/// States are stored frame by frame in one flat array; predecessor lists hold
/// flat indices into the previous frame and are sorted by template state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnfoldedGraph {
    frames: usize,
    frame_offsets: Vec<usize>,
    template: Vec<u32>,
    labels: Vec<u32>,
    pred_offsets: Vec<usize>,
    preds: Vec<u32>,
    accepting: Vec<u32>,
}

impl UnfoldedGraph {
    /// CTC lattice for `labels` over `frames` frames.
    pub fn ctc(labels: &[usize], frames: usize, blank: usize) -> Result<Self, GraphError> {
        let repeats = labels.windows(2).filter(|w| w[0] == w[1]).count();
        let min_frames = labels.len() + repeats;
        if frames < min_frames.max(1) {
            return Err(GraphError::Infeasible { min_frames, frames });
        }
        LabelGraph::ctc(labels, blank).unfold(frames)
    }

    /// ASG lattice for `labels` over `frames` frames.
    pub fn asg(labels: &[usize], frames: usize) -> Result<Self, GraphError> {
        if labels.is_empty() {
            return Err(GraphError::Empty);
        }
        if frames < labels.len() {
            return Err(GraphError::Infeasible {
                min_frames: labels.len(),
                frames,
            });
        }
        LabelGraph::asg(labels).unfold(frames)
    }

    /// Fully connected lattice over `num_labels` labels.
    pub fn full(num_labels: usize, frames: usize) -> Result<Self, GraphError> {
        if num_labels == 0 {
            return Err(GraphError::NoLabels);
        }
        LabelGraph::full(num_labels).unfold(frames)
    }

    #[inline]
    pub fn frames(&self) -> usize {
        self.frames
    }

    #[inline]
    pub fn num_states(&self) -> usize {
        self.template.len()
    }

    /// Flat state indices belonging to frame `t`.
    #[inline]
    pub fn frame_states(&self, t: usize) -> Range<usize> {
        self.frame_offsets[t]..self.frame_offsets[t + 1]
    }

    #[inline]
    pub fn label(&self, state: usize) -> usize {
        self.labels[state] as usize
    }

    #[inline]
    pub fn template_state(&self, state: usize) -> usize {
        self.template[state] as usize
    }

    #[inline]
    pub fn preds(&self, state: usize) -> &[u32] {
        &self.preds[self.pred_offsets[state]..self.pred_offsets[state + 1]]
    }

    /// Accepting states at the last frame, in template order.
    pub fn accepting(&self) -> &[u32] {
        &self.accepting
    }

    /// Largest label id used by any state.
    pub fn max_label(&self) -> usize {
        self.labels.iter().copied().max().unwrap_or(0) as usize
    }

    /// Number of accepted paths, saturating at `u128::MAX`.
    pub fn count_paths(&self) -> u128 {
        let mut count = vec![0u128; self.num_states()];
        for s in self.frame_states(0) {
            count[s] = 1;
        }
        for t in 1..self.frames {
            for s in self.frame_states(t) {
                count[s] = self
                    .preds(s)
                    .iter()
                    .fold(0u128, |acc, &p| acc.saturating_add(count[p as usize]));
            }
        }
        self.accepting
            .iter()
            .fold(0u128, |acc, &s| acc.saturating_add(count[s as usize]))
    }

    /// Every accepted path as a frame-by-frame label list. Meant for tiny graphs.
    pub fn enumerate_paths(&self) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let mut stack: Vec<usize> = Vec::with_capacity(self.frames);
        for &s in &self.accepting {
            self.walk_back(s as usize, &mut stack, &mut out);
        }
        out.sort();
        out
    }

    fn walk_back(&self, state: usize, stack: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        stack.push(self.label(state));
        if stack.len() == self.frames {
            out.push(stack.iter().rev().copied().collect());
        } else {
            for &p in self.preds(state) {
                self.walk_back(p as usize, stack, out);
            }
        }
        stack.pop();
    }
}
