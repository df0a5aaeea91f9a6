//! Wall-clock timing of loss plus gradient over random batches.

use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::criterion::{asg_loss_batch, ctc_loss_batch, EmissionTable, TransitionTable};
use crate::matrix::Matrix;

#[derive(Debug, Error, PartialEq)]
pub enum BenchError {
    #[error("invalid bench config: {0}")]
    Config(String),
    #[error("criterion failed: {0}")]
    Criterion(String),
    #[error("csv: {0}")]
    Csv(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchCriterion {
    Ctc,
    Asg,
}

impl FromStr for BenchCriterion {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ctc" => Ok(Self::Ctc),
            "asg" => Ok(Self::Asg),
            o => Err(format!("unknown criterion {o:?} (expected ctc or asg)")),
        }
    }
}

impl std::fmt::Display for BenchCriterion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Ctc => "ctc",
            Self::Asg => "asg",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub frames: usize,
    /// Label count, CTC blank included.
    pub vocab: usize,
    pub transcription_len: usize,
    pub batch_size: usize,
    /// Timed runs; warmup runs come on top.
    pub repetitions: usize,
    pub warmup: usize,
    pub criterion: BenchCriterion,
    /// Worker threads; `None` uses the available parallelism.
    pub threads: Option<usize>,
    pub seed: u64,
}

impl BenchConfig {
    /// 150 frames, 28 labels, 40-letter transcriptions.
    pub fn small(criterion: BenchCriterion, batch_size: usize) -> Self {
        Self {
            frames: 150,
            vocab: 28,
            transcription_len: 40,
            batch_size,
            repetitions: 10,
            warmup: 1,
            criterion,
            threads: None,
            seed: 0,
        }
    }

    /// 700 frames, 28 labels, 200-letter transcriptions.
    pub fn long(criterion: BenchCriterion, batch_size: usize) -> Self {
        Self {
            frames: 700,
            transcription_len: 200,
            ..Self::small(criterion, batch_size)
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: String| Err(BenchError::Config(m));
        if self.repetitions < 3 {
            return bad(format!("{} repetitions, at least 3 needed", self.repetitions));
        }
        if self.batch_size == 0 || self.frames == 0 || self.transcription_len == 0 {
            return bad("frames, transcription length and batch size must be positive".into());
        }
        if self.transcription_len > self.frames {
            return bad(format!(
                "transcription of {} labels cannot fit {} frames",
                self.transcription_len, self.frames
            ));
        }
        let min_vocab = match self.criterion {
            BenchCriterion::Asg => 2,
            BenchCriterion::Ctc => 3,
        };
        if self.vocab < min_vocab {
            return bad(format!("{} labels, at least {min_vocab} needed", self.vocab));
        }
        if self.threads == Some(0) {
            return bad("0 threads".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub criterion: BenchCriterion,
    pub frames: usize,
    pub vocab: usize,
    pub transcription_len: usize,
    pub batch_size: usize,
    pub repetitions: usize,
    pub median_ms: f64,
    pub p10_ms: f64,
    pub p90_ms: f64,
}

impl BenchResult {
    pub fn per_item_median_ms(&self) -> f64 {
        self.median_ms / self.batch_size as f64
    }
}

/// Linear-interpolated percentile of sorted values, `q` in [0, 1].
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Labels drawn uniformly from `0..n`, never the same twice in a row.
fn random_labels(rng: &mut ChaCha8Rng, len: usize, n: usize) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::with_capacity(len);
    while out.len() < len {
        let l = rng.gen_range(0..n);
        if out.last() != Some(&l) {
            out.push(l);
        }
    }
    out
}

type Batch = Vec<(EmissionTable<f64>, Vec<usize>)>;

fn make_batch(cfg: &BenchConfig) -> (Batch, TransitionTable<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let letters = match cfg.criterion {
        BenchCriterion::Asg => cfg.vocab,
        BenchCriterion::Ctc => cfg.vocab - 1,
    };
    let batch = (0..cfg.batch_size)
        .map(|_| {
            let f = EmissionTable::new(Matrix::from_fn(cfg.frames, cfg.vocab, |_, _| rng.gen_range(-2.0..2.0)));
            let f = match cfg.criterion {
                BenchCriterion::Asg => f,
                BenchCriterion::Ctc => f.log_softmax(),
            };
            (f, random_labels(&mut rng, cfg.transcription_len, letters))
        })
        .collect();
    let trans = Matrix::from_fn(cfg.vocab, cfg.vocab, |_, _| rng.gen_range(-0.5..0.5));
    let start = (0..cfg.vocab).map(|_| rng.gen_range(-0.5..0.5)).collect();
    (batch, TransitionTable::new(trans, start).expect("square table"))
}

/// Times forward and backward over one batch `warmup + repetitions` times and
/// summarises the timed runs.
pub fn run_bench(cfg: &BenchConfig) -> Result<BenchResult, BenchError> {
    cfg.validate()?;
    let (batch, tr) = make_batch(cfg);
    let blank = cfg.vocab - 1;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cfg.threads {
        pool = pool.num_threads(t);
    }
    let pool = pool.build().map_err(|e| BenchError::Config(e.to_string()))?;
    let run = || -> Result<f64, BenchError> {
        let t0 = Instant::now();
        let out = match cfg.criterion {
            BenchCriterion::Asg => asg_loss_batch(&batch, &tr),
            BenchCriterion::Ctc => ctc_loss_batch(&batch, blank),
        };
        let ms = t0.elapsed().as_secs_f64() * 1e3;
        for r in out {
            let r = r.map_err(|e| BenchError::Criterion(e.to_string()))?;
            if !r.loss.is_finite() {
                return Err(BenchError::Criterion("non-finite loss".into()));
            }
        }
        Ok(ms)
    };
    let mut times = pool.install(|| -> Result<Vec<f64>, BenchError> {
        for _ in 0..cfg.warmup {
            run()?;
        }
        (0..cfg.repetitions).map(|_| run()).collect()
    })?;
    times.sort_by(f64::total_cmp);
    Ok(BenchResult {
        criterion: cfg.criterion,
        frames: cfg.frames,
        vocab: cfg.vocab,
        transcription_len: cfg.transcription_len,
        batch_size: cfg.batch_size,
        repetitions: cfg.repetitions,
        median_ms: percentile(&times, 0.5),
        p10_ms: percentile(&times, 0.1),
        p90_ms: percentile(&times, 0.9),
    })
}

/// Aligned plain-text table, times with three decimals.
pub fn format_table(results: &[BenchResult]) -> String {
    let header = [
        "criterion",
        "frames",
        "vocab",
        "len",
        "batch",
        "reps",
        "median_ms",
        "p10_ms",
        "p90_ms",
    ];
    let rows: Vec<[String; 9]> = results
        .iter()
        .map(|r| {
            [
                r.criterion.to_string(),
                r.frames.to_string(),
                r.vocab.to_string(),
                r.transcription_len.to_string(),
                r.batch_size.to_string(),
                r.repetitions.to_string(),
                format!("{:.3}", r.median_ms),
                format!("{:.3}", r.p10_ms),
                format!("{:.3}", r.p90_ms),
            ]
        })
        .collect();
    let mut width = header.map(str::len);
    for r in &rows {
        for (w, c) in width.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let mut s = String::new();
    let line = |s: &mut String, cells: &[&str]| {
        for (i, c) in cells.iter().enumerate() {
            if i == 0 {
                let _ = write!(s, "{:<w$}", c, w = width[i]);
            } else {
                let _ = write!(s, "  {:>w$}", c, w = width[i]);
            }
        }
        s.push('\n');
    };
    line(&mut s, &header);
    for r in &rows {
        let cells: Vec<&str> = r.iter().map(String::as_str).collect();
        line(&mut s, &cells);
    }
    s
}

pub fn to_csv(results: &[BenchResult]) -> Result<String, BenchError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in results {
        w.serialize(r).map_err(|e| BenchError::Csv(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| BenchError::Csv(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| BenchError::Csv(e.to_string()))
}

pub fn from_csv(text: &str) -> Result<Vec<BenchResult>, BenchError> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| BenchError::Csv(e.to_string()))
}
