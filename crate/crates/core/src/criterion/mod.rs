//! Sequence criteria over unfolded label lattices.
//!
//! Three lattice families are supported: the CTC graph (transcription labels
//! with optional blanks), the ASG graph (transcription labels only, each
//! either repeated or advanced at every frame) and the fully connected graph
//! used by ASG as its normaliser. All scores are in the natural-log domain.

mod graph;
mod lattice;
mod logadd;
mod loss;

pub use graph::{GraphError, LabelGraph, UnfoldedGraph};
pub use lattice::{forward_score, forward_table, viterbi, ForwardTable, Mode};
pub use logadd::{logadd, logadd2};
pub use loss::{asg_loss, asg_loss_batch, ctc_loss, ctc_loss_batch, ctc_loss_with, full_graph_forward, CtcOptions};

use thiserror::Error;

use crate::matrix::Matrix;
use crate::scalar::Real;

#[derive(Debug, Error, PartialEq)]
pub enum CriterionError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("emission row {row} is not normalized (logadd = {logadd})")]
    NotNormalized { row: usize, logadd: f64 },
    #[error("label {label} is outside the emission table ({labels} labels)")]
    LabelOutOfRange { label: usize, labels: usize },
    #[error("transcription contains the blank label {0}")]
    BlankInTranscription(usize),
}

/// Per-frame label scores `f_t(i)`: one row per frame, one column per label.
#[derive(Debug, Clone, PartialEq)]
pub struct EmissionTable<R> {
    scores: Matrix<R>,
}

impl<R: Real> EmissionTable<R> {
    pub fn new(scores: Matrix<R>) -> Self {
        Self { scores }
    }

    pub fn from_rows<V: AsRef<[R]>>(rows: &[V]) -> Self {
        Self::new(Matrix::from_rows(rows))
    }

    pub fn filled(frames: usize, labels: usize, value: R) -> Self {
        Self::new(Matrix::filled(frames, labels, value))
    }

    #[inline]
    pub fn frames(&self) -> usize {
        self.scores.rows()
    }

    #[inline]
    pub fn labels(&self) -> usize {
        self.scores.cols()
    }

    #[inline]
    pub fn get(&self, t: usize, label: usize) -> R {
        self.scores[(t, label)]
    }

    pub fn scores(&self) -> &Matrix<R> {
        &self.scores
    }

    pub fn scores_mut(&mut self) -> &mut Matrix<R> {
        &mut self.scores
    }

    pub fn into_matrix(self) -> Matrix<R> {
        self.scores
    }

    /// Checks that every row log-adds to zero within `tol`.
    pub fn check_normalized(&self, tol: f64) -> Result<(), CriterionError> {
        for t in 0..self.frames() {
            let z = logadd(self.scores.row(t)).wide();
            if z.is_nan() || z.abs() > tol {
                return Err(CriterionError::NotNormalized { row: t, logadd: z });
            }
        }
        Ok(())
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        self.check_normalized(tol).is_ok()
    }

    /// Row-wise log-softmax.
    pub fn log_softmax(&self) -> Self {
        let mut out = self.scores.clone();
        for t in 0..out.rows() {
            let z = logadd(out.row(t));
            for v in out.row_mut(t) {
                *v -= z;
            }
        }
        Self::new(out)
    }

    pub fn cast<S: Real>(&self) -> EmissionTable<S> {
        EmissionTable::new(self.scores.cast())
    }
}

/// Label-to-label transition scores `g[i][j]` (from `i` at t-1 to `j` at t)
/// plus start scores used at the first frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionTable<R> {
    trans: Matrix<R>,
    start: Vec<R>,
}

impl<R: Real> TransitionTable<R> {
    pub fn zeros(labels: usize) -> Self {
        Self {
            trans: Matrix::zeros(labels, labels),
            start: vec![R::zero(); labels],
        }
    }

    pub fn new(trans: Matrix<R>, start: Vec<R>) -> Result<Self, CriterionError> {
        if trans.rows() != trans.cols() || start.len() != trans.rows() {
            return Err(CriterionError::Shape(format!(
                "transition matrix {}x{} with {} start scores",
                trans.rows(),
                trans.cols(),
                start.len()
            )));
        }
        Ok(Self { trans, start })
    }

    #[inline]
    pub fn labels(&self) -> usize {
        self.start.len()
    }

    #[inline]
    pub fn get(&self, from: usize, to: usize) -> R {
        self.trans[(from, to)]
    }

    #[inline]
    pub fn start(&self, label: usize) -> R {
        self.start[label]
    }

    pub fn trans(&self) -> &Matrix<R> {
        &self.trans
    }

    pub fn trans_mut(&mut self) -> &mut Matrix<R> {
        &mut self.trans
    }

    pub fn start_scores(&self) -> &[R] {
        &self.start
    }

    pub fn start_scores_mut(&mut self) -> &mut [R] {
        &mut self.start
    }

    pub fn cast<S: Real>(&self) -> TransitionTable<S> {
        TransitionTable {
            trans: self.trans.cast(),
            start: self.start.iter().map(|v| S::lit(v.wide())).collect(),
        }
    }
}

/// Loss value with gradients for every input group.
#[derive(Debug, Clone, PartialEq)]
pub struct CriterionResult<R> {
    pub loss: R,
    pub d_emissions: Matrix<R>,
    pub d_transitions: Matrix<R>,
    pub d_start: Vec<R>,
}

impl<R: Real> CriterionResult<R> {
    pub fn is_finite(&self) -> bool {
        self.loss.is_finite()
            && self.d_emissions.is_finite()
            && self.d_transitions.is_finite()
            && self.d_start.iter().all(|v| v.is_finite())
    }
}

pub(crate) fn check_shapes<R: Real>(f: &EmissionTable<R>, tr: &TransitionTable<R>) -> Result<(), CriterionError> {
    if f.labels() != tr.labels() {
        return Err(CriterionError::Shape(format!(
            "emissions have {} labels, transitions {}",
            f.labels(),
            tr.labels()
        )));
    }
    Ok(())
}
