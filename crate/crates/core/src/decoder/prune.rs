use super::{DecoderConfig, Hypothesis};

const BUCKETS: usize = 64;

/// Indices (ascending) of the entries that survive thresholding and the top-`k` cap.
///
/// Equal scores are ranked by position, so the result is the first `k` of a
/// stable descending sort, restricted to the threshold survivors.
pub(crate) fn select(scores: &[f64], k: usize, threshold: f64) -> Vec<usize> {
    let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let floor = best - threshold;
    let keep: Vec<usize> = (0..scores.len()).filter(|&i| scores[i] >= floor).collect();
    if keep.len() <= k {
        return keep;
    }
    let lo = keep.iter().map(|&i| scores[i]).fold(f64::INFINITY, f64::min);
    let span = best - lo;
    if !(span.is_finite() && span > 0.0) {
        return exact_top(&keep, scores, k);
    }
    // bucket 0 holds the best scores; buckets are monotone in score
    let bucket = |s: f64| (((best - s) / span * BUCKETS as f64) as usize).min(BUCKETS - 1);
    let mut hist = [0usize; BUCKETS];
    for &i in &keep {
        hist[bucket(scores[i])] += 1;
    }
    let mut taken = 0;
    let mut cut = 0;
    for (b, &c) in hist.iter().enumerate() {
        if taken + c >= k {
            cut = b;
            break;
        }
        taken += c;
    }
    let border: Vec<usize> = keep.iter().copied().filter(|&i| bucket(scores[i]) == cut).collect();
    let mut out: Vec<usize> = keep.iter().copied().filter(|&i| bucket(scores[i]) < cut).collect();
    out.extend(exact_top(&border, scores, k - taken));
    out.sort_unstable();
    out
}

fn exact_top(idx: &[usize], scores: &[f64], k: usize) -> Vec<usize> {
    let mut v = idx.to_vec();
    v.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    v.truncate(k);
    v.sort_unstable();
    v
}

/// Beam thresholding followed by histogram pruning. Survivors keep their order.
pub fn prune(frontier: Vec<Hypothesis>, cfg: &DecoderConfig) -> Vec<Hypothesis> {
    let scores: Vec<f64> = frontier.iter().map(|h| h.score(cfg)).collect();
    let keep = select(&scores, cfg.beam_size, cfg.beam_threshold);
    let mut flags = vec![false; frontier.len()];
    for i in keep {
        flags[i] = true;
    }
    frontier
        .into_iter()
        .zip(flags)
        .filter_map(|(h, k)| k.then_some(h))
        .collect()
}
