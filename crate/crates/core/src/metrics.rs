//! Letter and word error rates.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricError {
    #[error("reference has {reference} utterances, hypothesis {hypothesis}")]
    CountMismatch { reference: usize, hypothesis: usize },
}

/// Unit-cost edit distance between two sequences.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UtteranceScore {
    pub edits: usize,
    pub ref_len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub utterances: Vec<UtteranceScore>,
    pub total_edits: usize,
    pub total_ref_len: usize,
    /// `total_edits / total_ref_len`; 0 for an empty reference.
    pub rate: f64,
}

impl MetricReport {
    fn from_scores(utterances: Vec<UtteranceScore>) -> Self {
        let total_edits = utterances.iter().map(|u| u.edits).sum();
        let total_ref_len = utterances.iter().map(|u| u.ref_len).sum();
        let rate = if total_ref_len == 0 {
            0.0
        } else {
            total_edits as f64 / total_ref_len as f64
        };
        Self {
            utterances,
            total_edits,
            total_ref_len,
            rate,
        }
    }
}

/// Whitespace runs collapse to one space; leading and trailing whitespace is dropped.
fn letters(s: &str) -> Vec<char> {
    s.split_whitespace().collect::<Vec<_>>().join(" ").chars().collect()
}

fn check_counts<A, B>(r: &[A], h: &[B]) -> Result<(), MetricError> {
    if r.len() != h.len() {
        return Err(MetricError::CountMismatch {
            reference: r.len(),
            hypothesis: h.len(),
        });
    }
    Ok(())
}

/// Letter error rate. Spaces between words count as letters.
pub fn ler<S: AsRef<str>>(references: &[S], hypotheses: &[S]) -> Result<MetricReport, MetricError> {
    check_counts(references, hypotheses)?;
    Ok(MetricReport::from_scores(
        references
            .iter()
            .zip(hypotheses)
            .map(|(r, h)| {
                let (r, h) = (letters(r.as_ref()), letters(h.as_ref()));
                UtteranceScore {
                    edits: levenshtein(&r, &h),
                    ref_len: r.len(),
                }
            })
            .collect(),
    ))
}

/// Word error rate over whitespace-separated tokens.
pub fn wer<S: AsRef<str>>(references: &[S], hypotheses: &[S]) -> Result<MetricReport, MetricError> {
    check_counts(references, hypotheses)?;
    Ok(MetricReport::from_scores(
        references
            .iter()
            .zip(hypotheses)
            .map(|(r, h)| {
                let r: Vec<&str> = r.as_ref().split_whitespace().collect();
                let h: Vec<&str> = h.as_ref().split_whitespace().collect();
                UtteranceScore {
                    edits: levenshtein(&r, &h),
                    ref_len: r.len(),
                }
            })
            .collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Full-table recursion, kept separate from the rolling-row version.
    fn reference_distance(a: &[u8], b: &[u8]) -> usize {
        let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
        for (i, row) in d.iter_mut().enumerate() {
            row[0] = i;
        }
        for (j, cell) in d[0].iter_mut().enumerate() {
            *cell = j;
        }
        for i in 1..=a.len() {
            for j in 1..=b.len() {
                let c = if a[i - 1] == b[j - 1] { 0 } else { 1 };
                d[i][j] = *[d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + c]
                    .iter()
                    .min()
                    .unwrap();
            }
        }
        d[a.len()][b.len()]
    }

    #[test]
    fn classic_cases() {
        let r = ler(&["cat"], &["cat"]).unwrap();
        assert_eq!(r.rate, 0.0);
        let r = ler(&["kitten"], &["sitting"]).unwrap();
        assert_eq!(r.total_edits, 3);
        assert_eq!(r.rate, 0.5);
        let w = wer(&["the cat sat", "a dog"], &["the bat sat", "a dog barked"]).unwrap();
        assert_eq!(w.total_edits, 2);
        assert_eq!(w.total_ref_len, 5);
        assert_eq!(w.rate, 0.4);
    }

    #[test]
    fn mismatched_counts() {
        assert_eq!(
            ler(&["a", "b"], &["a"]),
            Err(MetricError::CountMismatch {
                reference: 2,
                hypothesis: 1
            })
        );
    }

    proptest! {
        #[test]
        fn matches_full_table(a in proptest::collection::vec(0u8..4, 0..12), b in proptest::collection::vec(0u8..4, 0..12)) {
            prop_assert_eq!(levenshtein(&a, &b), reference_distance(&a, &b));
        }
    }
}
