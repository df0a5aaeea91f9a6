use rayon::prelude::*;

use super::graph::UnfoldedGraph;
use super::lattice::{accumulate_posteriors, alpha, beta, Mode};
use super::logadd::logadd;
use super::GraphError;
use super::{check_shapes, CriterionError, CriterionResult, EmissionTable, TransitionTable};
use crate::matrix::Matrix;
use crate::scalar::Real;

/// Tolerance used by the strict normalization check in [`ctc_loss_with`].
pub const NORMALIZATION_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CtcOptions {
    pub blank: usize,
    /// Reject emission rows that do not log-add to zero.
    pub strict: bool,
}

fn check_labels(labels: &[usize], num_labels: usize) -> Result<(), CriterionError> {
    match labels.iter().find(|&&l| l >= num_labels) {
        Some(&label) => Err(CriterionError::LabelOutOfRange {
            label,
            labels: num_labels,
        }),
        None => Ok(()),
    }
}

/// CTC loss with zero transitions; `f` is expected to hold per-frame log-probabilities.
pub fn ctc_loss<R: Real>(
    f: &EmissionTable<R>,
    labels: &[usize],
    blank: usize,
) -> Result<CriterionResult<R>, CriterionError> {
    ctc_loss_with(f, labels, CtcOptions { blank, strict: false })
}

pub fn ctc_loss_with<R: Real>(
    f: &EmissionTable<R>,
    labels: &[usize],
    opts: CtcOptions,
) -> Result<CriterionResult<R>, CriterionError> {
    let n = f.labels();
    if opts.blank >= n {
        return Err(CriterionError::LabelOutOfRange {
            label: opts.blank,
            labels: n,
        });
    }
    check_labels(labels, n)?;
    if labels.contains(&opts.blank) {
        return Err(CriterionError::BlankInTranscription(opts.blank));
    }
    if opts.strict {
        f.check_normalized(NORMALIZATION_TOLERANCE)?;
    }
    let g = UnfoldedGraph::ctc(labels, f.frames(), opts.blank)?;
    let fwd = alpha(&g, f, None, Mode::LogAdd);
    let bwd = beta(&g, f, None);
    let mut d_emissions = Matrix::zeros(f.frames(), n);
    accumulate_posteriors(
        &g,
        f,
        None,
        &fwd.alpha,
        &bwd,
        fwd.score,
        -R::one(),
        &mut d_emissions,
        None,
    );
    Ok(CriterionResult {
        loss: -fwd.score,
        d_emissions,
        d_transitions: Matrix::zeros(n, n),
        d_start: vec![R::zero(); n],
    })
}

/// Dense forward/backward tables of the fully connected lattice.
struct FullLattice<R> {
    score: R,
    alpha: Matrix<R>,
    beta: Matrix<R>,
}

fn full_lattice<R: Real>(f: &EmissionTable<R>, tr: &TransitionTable<R>, with_beta: bool) -> FullLattice<R> {
    let (frames, n) = f.scores().shape();
    let g = tr.trans();
    // column-major copy so that the inner loop over source labels is contiguous
    let g_t = Matrix::from_fn(n, n, |j, i| g[(i, j)]);
    let mut alpha = Matrix::zeros(frames, n);
    for j in 0..n {
        alpha[(0, j)] = f.get(0, j) + tr.start(j);
    }
    let mut buf = vec![R::zero(); n];
    for t in 1..frames {
        let (prev, cur) = alpha.as_mut_slice().split_at_mut(t * n);
        let prev = &prev[(t - 1) * n..];
        let cur = &mut cur[..n];
        let row = f.scores().row(t);
        for j in 0..n {
            let col = g_t.row(j);
            let mut m = R::neg_infinity();
            for i in 0..n {
                let v = prev[i] + col[i];
                buf[i] = v;
                m = m.max(v);
            }
            let s: R = if m == R::neg_infinity() {
                R::zero()
            } else {
                buf.iter().map(|&v| (v - m).exp()).sum()
            };
            cur[j] = m + s.ln() + row[j];
        }
    }
    let score = logadd(alpha.row(frames - 1));

    let mut beta = Matrix::zeros(if with_beta { frames } else { 0 }, n);
    if with_beta {
        for t in (0..frames - 1).rev() {
            let next_row = f.scores().row(t + 1);
            for (j, b) in buf.iter_mut().enumerate() {
                *b = next_row[j] + beta[(t + 1, j)];
            }
            for i in 0..n {
                let gi = g.row(i);
                let mut m = R::neg_infinity();
                for j in 0..n {
                    m = m.max(gi[j] + buf[j]);
                }
                let s: R = if m == R::neg_infinity() {
                    R::zero()
                } else {
                    (0..n).map(|j| (gi[j] + buf[j] - m).exp()).sum()
                };
                beta[(t, i)] = m + s.ln();
            }
        }
    }
    FullLattice { score, alpha, beta }
}

/// Forward score of the fully connected lattice, computed densely.
pub fn full_graph_forward<R: Real>(f: &EmissionTable<R>, tr: &TransitionTable<R>) -> Result<R, CriterionError> {
    check_shapes(f, tr)?;
    if f.frames() == 0 {
        return Err(super::GraphError::NoFrames.into());
    }
    Ok(full_lattice(f, tr, false).score)
}

/// ASG loss: constrained-lattice score subtracted from the full-lattice normaliser.
///
/// Gradients are the full-lattice posteriors minus the constrained-lattice
/// posteriors, for emissions, transitions and start scores alike.
pub fn asg_loss<R: Real>(
    f: &EmissionTable<R>,
    tr: &TransitionTable<R>,
    labels: &[usize],
) -> Result<CriterionResult<R>, CriterionError> {
    check_shapes(f, tr)?;
    let n = f.labels();
    check_labels(labels, n)?;
    let band = AsgBand::new(labels, f.frames())?;
    let full = full_lattice(f, tr, true);

    let frames = f.frames();
    let mut d_emissions = Matrix::zeros(frames, n);
    let mut d_transitions = Matrix::zeros(n, n);
    let mut d_start = vec![R::zero(); n];

    // full-lattice marginals
    let z = full.score;
    for t in 0..frames {
        for j in 0..n {
            d_emissions[(t, j)] = (full.alpha[(t, j)] + full.beta[(t, j)] - z).exp();
        }
    }
    d_start.copy_from_slice(d_emissions.row(0));
    let g_mat = tr.trans();
    let mut tail = vec![R::zero(); n];
    for t in 1..frames {
        let row = f.scores().row(t);
        for j in 0..n {
            tail[j] = row[j] + full.beta[(t, j)] - z;
        }
        let prev = full.alpha.row(t - 1);
        for (i, &a) in prev.iter().enumerate() {
            let gi = g_mat.row(i);
            let di = d_transitions.row_mut(i);
            for j in 0..n {
                di[j] += (a + gi[j] + tail[j]).exp();
            }
        }
    }

    let constrained = band.forward_backward(f, tr, -R::one(), &mut d_emissions, &mut d_transitions, &mut d_start);

    Ok(CriterionResult {
        loss: z - constrained,
        d_emissions,
        d_transitions,
        d_start,
    })
}

/// The ASG lattice stored as a dense frames x labels band: at frame `t` the
/// live transcription positions are `lo(t)..=hi(t)`.
struct AsgBand<'a> {
    labels: &'a [usize],
    frames: usize,
}

impl<'a> AsgBand<'a> {
    fn new(labels: &'a [usize], frames: usize) -> Result<Self, CriterionError> {
        if labels.is_empty() {
            return Err(GraphError::Empty.into());
        }
        if frames < labels.len() {
            return Err(GraphError::Infeasible {
                min_frames: labels.len(),
                frames,
            }
            .into());
        }
        Ok(Self { labels, frames })
    }

    #[inline]
    fn lo(&self, t: usize) -> usize {
        (self.labels.len() + t).saturating_sub(self.frames)
    }

    #[inline]
    fn hi(&self, t: usize) -> usize {
        t.min(self.labels.len() - 1)
    }

    /// Returns the forward score and adds `scale * posterior` of every state
    /// and edge into the gradient buffers.
    fn forward_backward<R: Real>(
        &self,
        f: &EmissionTable<R>,
        tr: &TransitionTable<R>,
        scale: R,
        d_emissions: &mut Matrix<R>,
        d_trans: &mut Matrix<R>,
        d_start: &mut [R],
    ) -> R {
        let (frames, n) = (self.frames, self.labels.len());
        let lab = self.labels;
        let g = tr.trans();
        let ninf = R::neg_infinity();
        let one = R::one();
        let cutoff = R::exp_underflow();

        // share of the forward mass at (t, k) arriving by staying on k and by advancing from k - 1
        let mut alpha = Matrix::filled(frames, n, ninf);
        let mut stay_share = Matrix::zeros(frames, n);
        let mut adv_share = Matrix::zeros(frames, n);
        alpha[(0, 0)] = f.get(0, lab[0]) + tr.start(lab[0]);
        for t in 1..frames {
            let row = f.scores().row(t);
            let (prev, cur) = alpha.as_mut_slice().split_at_mut(t * n);
            let prev = &prev[(t - 1) * n..];
            for k in self.lo(t)..=self.hi(t) {
                let l = lab[k];
                let stay = prev[k] + g[(l, l)];
                let adv = if k > 0 { prev[k - 1] + g[(lab[k - 1], l)] } else { ninf };
                let (value, s, a) = if adv == ninf || adv - stay < cutoff {
                    (stay, one, R::zero())
                } else if stay == ninf || stay - adv < cutoff {
                    (adv, R::zero(), one)
                } else if adv > stay {
                    let e = (stay - adv).exp();
                    (adv + e.ln_1p(), e / (one + e), one / (one + e))
                } else {
                    let e = (adv - stay).exp();
                    (stay + e.ln_1p(), one / (one + e), e / (one + e))
                };
                cur[k] = value + row[l];
                stay_share[(t, k)] = s;
                adv_share[(t, k)] = a;
            }
        }
        let z = alpha[(frames - 1, n - 1)];

        // state posteriors, pushed back through the forward shares
        let mut post = vec![R::zero(); n];
        let mut earlier = vec![R::zero(); n];
        post[n - 1] = one;
        let tiny = R::min_positive_value();
        for t in (1..frames).rev() {
            let row_s = stay_share.row(t);
            let row_a = adv_share.row(t);
            earlier.iter_mut().for_each(|p| *p = R::zero());
            for k in self.lo(t)..=self.hi(t) {
                let p = post[k];
                if p < tiny {
                    continue;
                }
                let l = lab[k];
                let (s, a) = (p * row_s[k], p * row_a[k]);
                d_emissions[(t, l)] += scale * p;
                d_trans[(l, l)] += scale * s;
                earlier[k] += s;
                if k > 0 {
                    d_trans[(lab[k - 1], l)] += scale * a;
                    earlier[k - 1] += a;
                }
            }
            std::mem::swap(&mut post, &mut earlier);
        }
        d_emissions[(0, lab[0])] += scale * post[0];
        d_start[lab[0]] += scale * post[0];
        z
    }
}

/// ASG over a batch of independent utterances sharing one transition table.
pub fn asg_loss_batch<R: Real, L: AsRef<[usize]> + Sync>(
    batch: &[(EmissionTable<R>, L)],
    tr: &TransitionTable<R>,
) -> Vec<Result<CriterionResult<R>, CriterionError>> {
    batch
        .par_iter()
        .map(|(f, labels)| asg_loss(f, tr, labels.as_ref()))
        .collect()
}

pub fn ctc_loss_batch<R: Real, L: AsRef<[usize]> + Sync>(
    batch: &[(EmissionTable<R>, L)],
    blank: usize,
) -> Vec<Result<CriterionResult<R>, CriterionError>> {
    batch
        .par_iter()
        .map(|(f, labels)| ctc_loss(f, labels.as_ref(), blank))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::criterion::lattice::forward_score;
    use approx::assert_abs_diff_eq;

    #[test]
    fn asg_uniform_fixture() {
        let f = EmissionTable::filled(2, 4, 0.0f64);
        let tr = TransitionTable::zeros(4);
        let r = asg_loss(&f, &tr, &[1]).unwrap();
        assert_abs_diff_eq!(r.loss, 2.0 * 4f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(r.loss, 2.772589, epsilon = 1e-6);
    }

    #[test]
    fn ctc_single_frame() {
        let f = EmissionTable::filled(1, 2, -(2f64.ln()));
        let r = ctc_loss(&f, &[1], 0).unwrap();
        assert_abs_diff_eq!(r.loss, 2f64.ln(), epsilon = 1e-12);
        assert_eq!(r.d_emissions[(0, 0)], 0.0);
        assert_abs_diff_eq!(r.d_emissions[(0, 1)], -1.0, epsilon = 1e-12);
    }

    #[test]
    fn dense_full_graph_matches_generic_lattice() {
        let f = EmissionTable::from_rows(&[[0.3, -1.0, 0.2], [1.1, 0.4, -0.3], [0.0, 0.9, 0.5]]);
        let tr = TransitionTable::new(
            Matrix::from_rows(&[[0.1, -0.2, 0.3], [0.0, 0.5, -0.4], [0.7, 0.1, -0.1]]),
            vec![0.2, -0.1, 0.0],
        )
        .unwrap();
        let g = UnfoldedGraph::full(3, 3).unwrap();
        let generic = forward_score(&g, &f, &tr, Mode::LogAdd).unwrap();
        let dense = full_graph_forward(&f, &tr).unwrap();
        assert_abs_diff_eq!(generic, dense, epsilon = 1e-13);
    }

    #[test]
    fn banded_asg_matches_generic_lattice() {
        let f = EmissionTable::from_rows(&[
            [0.3, -1.0, 0.2],
            [1.1, 0.4, -0.3],
            [0.0, 0.9, 0.5],
            [-0.2, 0.1, 0.6],
            [0.4, -0.5, 0.0],
        ]);
        let tr = TransitionTable::new(
            Matrix::from_rows(&[[0.1, -0.2, 0.3], [0.0, 0.5, -0.4], [0.7, 0.1, -0.1]]),
            vec![0.2, -0.1, 0.0],
        )
        .unwrap();
        for labels in [vec![1], vec![0, 2], vec![2, 2, 1], vec![0, 1, 0, 2, 1]] {
            let g = UnfoldedGraph::asg(&labels, 5).unwrap();
            let fwd = alpha(&g, &f, Some(&tr), Mode::LogAdd);
            let bwd = beta(&g, &f, Some(&tr));
            let mut d_e = Matrix::zeros(5, 3);
            let mut d_g = Matrix::zeros(3, 3);
            let mut d_s = vec![0.0; 3];
            accumulate_posteriors(
                &g,
                &f,
                Some(&tr),
                &fwd.alpha,
                &bwd,
                fwd.score,
                1.0,
                &mut d_e,
                Some((&mut d_g, &mut d_s)),
            );

            let band = AsgBand::new(&labels, 5).unwrap();
            let mut b_e = Matrix::zeros(5, 3);
            let mut b_g = Matrix::zeros(3, 3);
            let mut b_s = vec![0.0; 3];
            let z = band.forward_backward(&f, &tr, 1.0, &mut b_e, &mut b_g, &mut b_s);
            assert_abs_diff_eq!(z, fwd.score, epsilon = 1e-13);
            for (a, b) in d_e
                .as_slice()
                .iter()
                .zip(b_e.as_slice())
                .chain(d_g.as_slice().iter().zip(b_g.as_slice()))
            {
                assert_abs_diff_eq!(a, b, epsilon = 1e-13);
            }
            for (a, b) in d_s.iter().zip(&b_s) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn strict_ctc_rejects_unnormalized_rows() {
        let f = EmissionTable::filled(2, 3, 0.0f64);
        let err = ctc_loss_with(&f, &[1], CtcOptions { blank: 0, strict: true }).unwrap_err();
        assert!(matches!(err, CriterionError::NotNormalized { row: 0, .. }));
        assert!(ctc_loss_with(&f.log_softmax(), &[1], CtcOptions { blank: 0, strict: true }).is_ok());
    }

    #[test]
    fn label_errors() {
        let f = EmissionTable::filled(3, 3, 0.0f64);
        let tr = TransitionTable::zeros(3);
        assert!(matches!(
            ctc_loss(&f, &[0, 1], 0),
            Err(CriterionError::BlankInTranscription(0))
        ));
        assert!(matches!(
            asg_loss(&f, &tr, &[4]),
            Err(CriterionError::LabelOutOfRange { label: 4, .. })
        ));
        assert!(matches!(
            asg_loss(&f, &tr, &[0, 1, 2, 1]),
            Err(CriterionError::Graph(_))
        ));
        assert!(matches!(ctc_loss(&f, &[1, 1, 1], 0), Err(CriterionError::Graph(_))));
    }

    #[test]
    fn batch_matches_serial() {
        let f1 = EmissionTable::from_rows(&[[0.3, -1.0, 0.2], [1.1, 0.4, -0.3]]);
        let f2 = EmissionTable::from_rows(&[[0.0, 0.5, 0.2], [0.1, 0.4, -0.3], [0.9, 0.0, 0.0]]);
        let tr = TransitionTable::zeros(3);
        let batch = vec![(f1.clone(), vec![1, 2]), (f2.clone(), vec![2])];
        let out = asg_loss_batch(&batch, &tr);
        assert_eq!(out[0].as_ref().unwrap(), &asg_loss(&f1, &tr, &[1, 2]).unwrap());
        assert_eq!(out[1].as_ref().unwrap(), &asg_loss(&f2, &tr, &[2]).unwrap());
    }
}
