use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::network::{network_backward, network_forward_cached};
use super::{AcousticError, ModelParams, NetworkSpec};
use crate::alphabet::Alphabet;
use crate::criterion::{asg_loss, viterbi, EmissionTable, TransitionTable, UnfoldedGraph};
use crate::features::FeatureSequence;
use crate::matrix::Matrix;
use crate::metrics::ler;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Global L2 norm the averaged batch gradient is clipped to.
    pub clip_norm: f64,
    /// The last `heldout` samples are never trained on. With 0 the curve is
    /// measured on the training set.
    pub heldout: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            learning_rate: 0.1,
            batch_size: 8,
            clip_norm: 1.0,
            heldout: 100,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean ASG loss over the epoch's training samples, measured before each update.
    pub train_loss: f64,
    pub heldout_ler: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams<f32>,
    pub transitions: TransitionTable<f32>,
    pub curve: Vec<EpochStats>,
}

struct Prepared<'a> {
    x: &'a Matrix<f32>,
    labels: Vec<usize>,
}

fn prepare<'a>(
    dataset: &'a [(FeatureSequence<f32>, String)],
    spec: &NetworkSpec,
    alphabet: &Alphabet,
) -> Result<Vec<Prepared<'a>>, AcousticError> {
    dataset
        .iter()
        .enumerate()
        .map(|(index, (f, text))| {
            let bad = |reason: String| AcousticError::InfeasibleSample { index, reason };
            if f.dim() != spec.input_dim() {
                return Err(bad(format!(
                    "{} feature dims, network expects {}",
                    f.dim(),
                    spec.input_dim()
                )));
            }
            let labels = alphabet.encode(text).map_err(|e| bad(e.to_string()))?.into_vec();
            let out = spec
                .output_len(f.len())
                .ok_or_else(|| bad(format!("{} frames is shorter than the receptive field", f.len())))?;
            if labels.is_empty() || labels.len() > out {
                return Err(bad(format!("{} labels for {} output frames", labels.len(), out)));
            }
            Ok(Prepared { x: f.frames(), labels })
        })
        .collect()
}

/// Loss and flat gradient: every layer's weights then biases, then transitions, then start scores.
fn sample_gradient(
    s: &Prepared<'_>,
    spec: &NetworkSpec,
    params: &ModelParams<f32>,
    tr: &TransitionTable<f64>,
) -> Result<(f64, Vec<f64>), AcousticError> {
    let (out, cache) = network_forward_cached(s.x, spec, params)?;
    let emissions = EmissionTable::new(out.cast::<f64>());
    let r = asg_loss(&emissions, tr, &s.labels)?;
    let d_out = r.d_emissions.cast::<f32>();
    let g = network_backward(spec, params, &cache, &d_out)?;
    let mut flat = Vec::new();
    for l in &g.layers {
        flat.extend(l.weight.iter().chain(&l.bias).map(|&v| v as f64));
    }
    flat.extend_from_slice(r.d_transitions.as_slice());
    flat.extend_from_slice(&r.d_start);
    Ok((r.loss, flat))
}

fn apply_update(params: &mut ModelParams<f32>, tr: &mut TransitionTable<f32>, step: &[f64]) {
    let mut it = step.iter();
    let mut upd = |v: &mut f32| *v = (*v as f64 - it.next().expect("gradient length")) as f32;
    for l in &mut params.layers {
        l.weight.iter_mut().for_each(&mut upd);
        l.bias.iter_mut().for_each(&mut upd);
    }
    tr.trans_mut().as_mut_slice().iter_mut().for_each(&mut upd);
    tr.start_scores_mut().iter_mut().for_each(&mut upd);
}

/// Best full-lattice path, collapsed and read out as text.
fn transcribe(
    x: &Matrix<f32>,
    spec: &NetworkSpec,
    params: &ModelParams<f32>,
    tr: &TransitionTable<f32>,
    alphabet: &Alphabet,
) -> Result<String, AcousticError> {
    let (out, _) = network_forward_cached(x, spec, params)?;
    let f = EmissionTable::new(out);
    let g = UnfoldedGraph::full(f.labels(), f.frames()).map_err(crate::criterion::CriterionError::from)?;
    let (path, _) = viterbi(&g, &f, tr)?;
    Ok(alphabet.decode_lossy(alphabet.collapse_path(&path).ids()))
}

/// Letter error rate of Viterbi transcriptions on `samples`.
pub fn evaluate_ler(
    samples: &[(FeatureSequence<f32>, String)],
    spec: &NetworkSpec,
    params: &ModelParams<f32>,
    transitions: &TransitionTable<f32>,
    alphabet: &Alphabet,
) -> Result<f64, AcousticError> {
    let hyps: Vec<String> = samples
        .par_iter()
        .map(|(f, _)| transcribe(f.frames(), spec, params, transitions, alphabet))
        .collect::<Result<_, _>>()?;
    let refs: Vec<&str> = samples.iter().map(|(_, t)| t.as_str()).collect();
    let hyps: Vec<&str> = hyps.iter().map(String::as_str).collect();
    Ok(ler(&refs, &hyps).expect("equal counts").rate)
}

/// Minibatch SGD on the ASG loss, learning network weights, transitions and start scores.
///
/// Per-sample gradients are computed in parallel and summed in dataset order,
/// so results do not depend on the thread count.
pub fn train_toy(
    dataset: &[(FeatureSequence<f32>, String)],
    spec: &NetworkSpec,
    alphabet: &Alphabet,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, AcousticError> {
    if dataset.is_empty() {
        return Err(AcousticError::InvalidSpec("empty dataset".into()));
    }
    if cfg.heldout >= dataset.len() && cfg.heldout != 0 {
        return Err(AcousticError::InvalidSpec(format!(
            "{} held-out samples leave nothing to train on ({} total)",
            cfg.heldout,
            dataset.len()
        )));
    }
    if spec.output_dim() != alphabet.len() {
        return Err(AcousticError::InvalidSpec(format!(
            "network emits {} scores for a {}-symbol alphabet",
            spec.output_dim(),
            alphabet.len()
        )));
    }
    if cfg.batch_size == 0 {
        return Err(AcousticError::InvalidSpec("batch size 0".into()));
    }
    let prepared = prepare(dataset, spec, alphabet)?;
    let split = dataset.len() - cfg.heldout;
    let train = &prepared[..split];
    let eval_set = if cfg.heldout == 0 { dataset } else { &dataset[split..] };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = ModelParams::<f32>::init(spec, &mut rng);
    let mut transitions = TransitionTable::<f32>::zeros(alphabet.len());
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let tr64 = transitions.cast::<f64>();
            let results: Vec<(f64, Vec<f64>)> = batch
                .par_iter()
                .map(|&i| sample_gradient(&train[i], spec, &params, &tr64))
                .collect::<Result<_, _>>()?;
            let mut grad = vec![0.0; results[0].1.len()];
            for (loss, g) in &results {
                loss_sum += loss;
                for (a, b) in grad.iter_mut().zip(g) {
                    *a += b;
                }
            }
            let scale = 1.0 / batch.len() as f64;
            let norm = grad.iter().map(|v| v * v).sum::<f64>().sqrt() * scale;
            let clip = if norm > cfg.clip_norm {
                cfg.clip_norm / norm
            } else {
                1.0
            };
            let k = cfg.learning_rate * scale * clip;
            grad.iter_mut().for_each(|v| *v *= k);
            apply_update(&mut params, &mut transitions, &grad);
        }
        let heldout_ler = evaluate_ler(eval_set, spec, &params, &transitions, alphabet)?;
        curve.push(EpochStats {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            heldout_ler,
        });
    }
    Ok(TrainOutcome {
        params,
        transitions,
        curve,
    })
}

/// `epoch,train_loss,heldout_ler` rows with fixed precision.
pub fn curve_csv(curve: &[EpochStats]) -> String {
    let mut s = String::from("epoch,train_loss,heldout_ler\n");
    for e in curve {
        s.push_str(&format!("{},{:.6},{:.6}\n", e.epoch, e.train_loss, e.heldout_ler));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acoustic::synth::{featurize, generate, SynthConfig};
    use crate::features::FeatureConfig;

    fn toy(n: usize) -> (Vec<(FeatureSequence<f32>, String)>, NetworkSpec, Alphabet) {
        let data = featurize(
            &generate(&SynthConfig {
                num_samples: n,
                ..SynthConfig::default()
            }),
            &FeatureConfig::default(),
        )
        .unwrap();
        let spec = NetworkSpec::parse("39 16 5 1 hardtanh\n16 8 5 2 none").unwrap();
        (data, spec, Alphabet::with_letters(&['a', 'b', 'c', 'd', 'e']).unwrap())
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        let (data, spec, a) = toy(12);
        let cfg = TrainConfig {
            epochs: 3,
            learning_rate: 0.0,
            heldout: 4,
            ..TrainConfig::default()
        };
        let out = train_toy(&data, &spec, &a, &cfg).unwrap();
        let init = ModelParams::<f32>::init(&spec, &mut ChaCha8Rng::seed_from_u64(cfg.seed));
        assert_eq!(out.params, init);
        assert!(out.curve.windows(2).all(|w| w[0].heldout_ler == w[1].heldout_ler));
        assert!(out.transitions.trans().as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_sample_overfits() {
        let (data, spec, a) = toy(1);
        let cfg = TrainConfig {
            epochs: 300,
            learning_rate: 0.5,
            batch_size: 1,
            heldout: 0,
            ..TrainConfig::default()
        };
        let out = train_toy(&data, &spec, &a, &cfg).unwrap();
        let last = out.curve.last().unwrap();
        let prep = prepare(&data, &spec, &a).unwrap();
        let (loss, _) = sample_gradient(&prep[0], &spec, &out.params, &out.transitions.cast()).unwrap();
        assert!(loss < 0.1, "loss {loss}, curve end {last:?}");
        assert!(loss < out.curve[0].train_loss);
    }

    #[test]
    fn infeasible_sample_is_named() {
        let (mut data, spec, a) = toy(3);
        data[1].1 = "abcabcabcabcabcabcabcabcabcabcabcabcabcabc".into();
        let err = train_toy(
            &data,
            &spec,
            &a,
            &TrainConfig {
                heldout: 0,
                ..TrainConfig::default()
            },
        )
        .unwrap_err();
        assert!(matches!(err, AcousticError::InfeasibleSample { index: 1, .. }), "{err}");
        data[1].1 = "xyz".into();
        let err = train_toy(
            &data,
            &spec,
            &a,
            &TrainConfig {
                heldout: 0,
                ..TrainConfig::default()
            },
        )
        .unwrap_err();
        assert!(matches!(err, AcousticError::InfeasibleSample { index: 1, .. }));
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let (data, spec, a) = toy(10);
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 4,
            heldout: 2,
            ..TrainConfig::default()
        };
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| train_toy(&data, &spec, &a, &cfg).unwrap())
        };
        let (one, four) = (run(1), run(4));
        assert_eq!(one.params, four.params);
        assert_eq!(one.curve, four.curve);
    }
}
