//! `letterspeech` command-line front end.

mod toy;

use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use letterspeech::acoustic::{load_checkpoint, network_forward, OutputMode};
use letterspeech::alphabet::Alphabet;
use letterspeech::bench::{format_table, run_bench, to_csv, BenchConfig, BenchCriterion};
use letterspeech::criterion::{
    asg_loss, ctc_loss, viterbi, CriterionResult, EmissionTable, TransitionTable, UnfoldedGraph,
};
use letterspeech::decoder::{decode, DecodeMode, DecoderConfig, DecoderError, SilencePolicy};
use letterspeech::features::{mfcc, normalize, power_spectrum, FeatureConfig, FeatureSequence};
use letterspeech::io::{load_emissions, load_features, load_transitions, read_raw_pcm, read_wav, save_features};
use letterspeech::lm::{load_arpa, load_lexicon, smear, OovPolicy, SmearMode};
use letterspeech::metrics::{ler, wer, MetricReport};

/// Letter-based speech recognition toolkit.
///
/// Every long flag marked with an environment variable can also be set
/// through `LETTERSPEECH_<FLAG>`, e.g. `LETTERSPEECH_THREADS=4`.
#[derive(Debug, Parser)]
#[command(name = "letterspeech", version)]
struct Cli {
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true, env = "LETTERSPEECH_THREADS")]
    threads: Option<usize>,
    /// Seed for every random choice a command makes.
    #[arg(long, global = true, env = "LETTERSPEECH_SEED")]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Extract MFCC or power-spectrum features from a WAV or raw PCM file.
    Features(FeaturesArgs),
    /// Compute the ASG or CTC loss of a transcription.
    Loss(LossArgs),
    /// Best frame labelling over the fully connected lattice.
    Viterbi(ViterbiArgs),
    /// Train the toy acoustic model on synthetic utterances.
    TrainToy(TrainToyArgs),
    /// Beam-search decoding with a lexicon and an n-gram model.
    Decode(DecodeArgs),
    /// Letter error rate between two line-aligned text files.
    Ler(MetricArgs),
    /// Word error rate between two line-aligned text files.
    Wer(MetricArgs),
    /// Time loss plus gradient for ASG and CTC.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FeatureKind {
    Mfcc,
    Power,
}

#[derive(Debug, Args)]
struct FeaturesArgs {
    /// 16-bit WAV input, or raw little-endian 16-bit PCM with --raw-rate.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, value_enum, default_value = "mfcc")]
    kind: FeatureKind,
    /// Treat the input as headerless PCM at this sample rate.
    #[arg(long)]
    raw_rate: Option<u32>,
    /// Normalise every dimension to mean 0 and standard deviation 1.
    #[arg(long)]
    normalize: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CriterionArg {
    Asg,
    Ctc,
}

#[derive(Debug, Args)]
struct AlphabetArg {
    /// Alphabet file, one symbol per line. Defaults to a-z, apostrophe, |, 2, 3.
    #[arg(long)]
    alphabet: Option<PathBuf>,
}

impl AlphabetArg {
    fn load(&self) -> Result<Alphabet> {
        match &self.alphabet {
            None => Ok(Alphabet::default()),
            Some(p) => {
                let file = fs::File::open(p).with_context(|| format!("opening {}", p.display()))?;
                Alphabet::read(BufReader::new(file)).with_context(|| format!("reading alphabet {}", p.display()))
            }
        }
    }
}

#[derive(Debug, Args)]
struct LossArgs {
    #[arg(long)]
    emissions: PathBuf,
    /// Required for ASG.
    #[arg(long)]
    transitions: Option<PathBuf>,
    /// Text encoded with the alphabet.
    #[arg(long, conflicts_with = "labels", required_unless_present = "labels")]
    transcription: Option<String>,
    /// Comma-separated label ids, used as is.
    #[arg(long, value_delimiter = ',')]
    labels: Option<Vec<usize>>,
    #[arg(long, value_enum, default_value = "asg")]
    criterion: CriterionArg,
    #[command(flatten)]
    alphabet: AlphabetArg,
    /// Write every gradient entry as `kind,row,col,value` CSV.
    #[arg(long)]
    grad: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ViterbiArgs {
    #[arg(long, required_unless_present = "features", conflicts_with = "features")]
    emissions: Option<PathBuf>,
    /// Feature file, run through --checkpoint to obtain emissions.
    #[arg(long, requires = "checkpoint")]
    features: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    transitions: PathBuf,
    #[command(flatten)]
    alphabet: AlphabetArg,
}

#[derive(Debug, Args)]
struct TrainToyArgs {
    /// TOML file with a `network` key and [synth] and [train] tables.
    #[arg(long)]
    config: PathBuf,
    /// Receives model.ckpt, transitions.lstb, alphabet.txt and ler.csv.
    #[arg(long)]
    output_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Max,
    Logadd,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SilenceArg {
    Optional,
    Required,
    Never,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SmearArg {
    Max,
    Logadd,
    None,
}

#[derive(Debug, Args)]
struct DecodeArgs {
    #[arg(long)]
    emissions: PathBuf,
    #[arg(long)]
    transitions: PathBuf,
    #[arg(long)]
    arpa: PathBuf,
    /// Lexicon file: `word TAB spelling` per line.
    #[arg(long)]
    lexicon: PathBuf,
    #[command(flatten)]
    alphabet: AlphabetArg,
    #[arg(
        long,
        default_value_t = 1.0,
        env = "LETTERSPEECH_ALPHA",
        allow_negative_numbers = true
    )]
    alpha: f64,
    #[arg(
        long,
        default_value_t = 0.0,
        env = "LETTERSPEECH_BETA",
        allow_negative_numbers = true
    )]
    beta: f64,
    #[arg(long, default_value_t = 100, env = "LETTERSPEECH_BEAM_SIZE")]
    beam_size: usize,
    /// Use `inf` to disable thresholding.
    #[arg(long, default_value_t = 25.0, env = "LETTERSPEECH_BEAM_THRESHOLD")]
    beam_threshold: f64,
    #[arg(long, value_enum, default_value = "max")]
    mode: ModeArg,
    #[arg(long, value_enum, default_value = "optional")]
    silence: SilenceArg,
    #[arg(long, value_enum, default_value = "max")]
    smear: SmearArg,
    #[arg(long)]
    max_words: Option<usize>,
    #[arg(long, default_value_t = 1)]
    nbest: usize,
    /// Map out-of-vocabulary lexicon words to <unk>.
    #[arg(long)]
    unk: bool,
}

#[derive(Debug, Args)]
struct MetricArgs {
    #[arg(long)]
    reference: PathBuf,
    #[arg(long)]
    hypothesis: PathBuf,
    /// Also print `index TAB edits TAB reference_length` per line pair.
    #[arg(long)]
    per_utterance: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum BenchCriterionArg {
    Asg,
    Ctc,
    Both,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PresetArg {
    Small,
    Long,
    Both,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long, value_enum, default_value = "both")]
    criterion: BenchCriterionArg,
    /// Reference shape; --frames, --vocab and --transcription-len override it.
    #[arg(long, value_enum, default_value = "both")]
    preset: PresetArg,
    #[arg(long, env = "LETTERSPEECH_FRAMES")]
    frames: Option<usize>,
    #[arg(long, env = "LETTERSPEECH_VOCAB")]
    vocab: Option<usize>,
    #[arg(long)]
    transcription_len: Option<usize>,
    #[arg(long, value_delimiter = ',', default_value = "1,4,8")]
    batch: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    repetitions: usize,
    #[arg(long, default_value_t = 1)]
    warmup: usize,
    /// Also write the results as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

/// Process exit status when every hypothesis was pruned.
const EXIT_PRUNED: u8 = 2;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    if let Some(t) = cli.threads {
        if t == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global().ok();
    }
    let out = &mut io::stdout().lock();
    match cli.command {
        Command::Features(a) => features(a, out)?,
        Command::Loss(a) => loss(a, out)?,
        Command::Viterbi(a) => viterbi_cmd(a, out)?,
        Command::TrainToy(a) => toy::train(&a.config, &a.output_dir, cli.seed, out)?,
        Command::Decode(a) => return decode_cmd(a, out),
        Command::Ler(a) => metric(a, ler::<String>, "ler", out)?,
        Command::Wer(a) => metric(a, wer::<String>, "wer", out)?,
        Command::Bench(a) => bench(a, cli.threads, cli.seed, out)?,
    }
    Ok(ExitCode::SUCCESS)
}

/// `x` with `digits` significant digits in plain decimal notation.
fn significant(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{:.*}", digits.saturating_sub(1), x);
    }
    let magnitude = x.abs().log10().floor() as i64;
    let decimals = (digits as i64 - 1 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}

fn features(a: FeaturesArgs, out: &mut impl Write) -> Result<()> {
    let wave = match a.raw_rate {
        Some(rate) => read_raw_pcm(&a.input, rate),
        None => read_wav(&a.input),
    }
    .with_context(|| format!("reading {}", a.input.display()))?;
    let cfg = FeatureConfig::default();
    let mut f: FeatureSequence<f32> = match a.kind {
        FeatureKind::Mfcc => mfcc(&wave, &cfg)?,
        FeatureKind::Power => power_spectrum(&wave, &cfg)?,
    };
    if a.normalize {
        f = normalize(&f);
    }
    save_features(&a.output, &f).with_context(|| format!("writing {}", a.output.display()))?;
    writeln!(
        out,
        "{} frames x {} dims, stride {} ms",
        f.len(),
        f.dim(),
        f.stride_ms()
    )?;
    Ok(())
}

fn read_emissions(path: &Path) -> Result<EmissionTable<f64>> {
    load_emissions(path).with_context(|| format!("reading emissions {}", path.display()))
}

fn read_transitions(path: &Path) -> Result<TransitionTable<f64>> {
    load_transitions(path).with_context(|| format!("reading transitions {}", path.display()))
}

fn loss(a: LossArgs, out: &mut impl Write) -> Result<()> {
    let f = read_emissions(&a.emissions)?;
    let labels = match (&a.labels, &a.transcription) {
        (Some(l), _) => l.clone(),
        (None, Some(text)) => a.alphabet.load()?.encode(text)?.into_vec(),
        (None, None) => unreachable!("clap requires one of them"),
    };
    let result: CriterionResult<f64> = match a.criterion {
        CriterionArg::Asg => {
            let path = a
                .transitions
                .as_ref()
                .ok_or_else(|| anyhow!("--transitions is required for ASG"))?;
            asg_loss(&f, &read_transitions(path)?, &labels)?
        }
        CriterionArg::Ctc => ctc_loss(&f, &labels, f.labels() - 1)?,
    };
    writeln!(out, "{}", significant(result.loss, 9))?;
    if let Some(path) = &a.grad {
        fs::write(path, gradient_csv(&result)).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

/// Shortest round-trip representation of every gradient entry.
fn gradient_csv(r: &CriterionResult<f64>) -> String {
    let mut s = String::from("kind,row,col,value\n");
    let (rows, cols) = r.d_emissions.shape();
    for i in 0..rows {
        for j in 0..cols {
            s.push_str(&format!("emission,{i},{j},{}\n", r.d_emissions[(i, j)]));
        }
    }
    let n = r.d_transitions.rows();
    for i in 0..n {
        for j in 0..n {
            s.push_str(&format!("transition,{i},{j},{}\n", r.d_transitions[(i, j)]));
        }
    }
    for (j, v) in r.d_start.iter().enumerate() {
        s.push_str(&format!("start,0,{j},{v}\n"));
    }
    s
}

fn viterbi_cmd(a: ViterbiArgs, out: &mut impl Write) -> Result<()> {
    let alphabet = a.alphabet.load()?;
    let f = match (&a.emissions, &a.features, &a.checkpoint) {
        (Some(p), _, _) => read_emissions(p)?,
        (None, Some(feats), Some(ckpt)) => {
            let x: FeatureSequence<f64> =
                load_features(feats).with_context(|| format!("reading features {}", feats.display()))?;
            let (spec, params) = load_checkpoint::<f64>(ckpt).with_context(|| format!("reading {}", ckpt.display()))?;
            network_forward(&x, &spec, &params, OutputMode::Raw)?
        }
        _ => bail!("need --emissions, or --features with --checkpoint"),
    };
    let tr = read_transitions(&a.transitions)?;
    let g = UnfoldedGraph::full(f.labels(), f.frames()).map_err(letterspeech::criterion::CriterionError::from)?;
    let (path, score) = viterbi(&g, &f, &tr)?;
    let ids: Vec<String> = path.iter().map(usize::to_string).collect();
    writeln!(out, "score\t{score:.6}")?;
    writeln!(out, "path\t{}", ids.join(" "))?;
    writeln!(
        out,
        "text\t{}",
        alphabet.decode_lossy(alphabet.collapse_path(&path).ids())
    )?;
    Ok(())
}

fn decode_cmd(a: DecodeArgs, out: &mut impl Write) -> Result<ExitCode> {
    let alphabet = a.alphabet.load()?;
    let f = read_emissions(&a.emissions)?;
    let tr = read_transitions(&a.transitions)?;
    let mut lm = load_arpa(&a.arpa).with_context(|| format!("reading ARPA model {}", a.arpa.display()))?;
    if a.unk {
        lm = lm.with_oov_policy(OovPolicy::Unk)?;
    }
    let mut lexicon =
        load_lexicon(&a.lexicon, &alphabet).with_context(|| format!("reading lexicon {}", a.lexicon.display()))?;
    let smear_mode = match a.smear {
        SmearArg::Max => Some(SmearMode::Max),
        SmearArg::Logadd => Some(SmearMode::LogAdd),
        SmearArg::None => None,
    };
    if let Some(m) = smear_mode {
        lexicon = smear(&lexicon, &lm, m)?;
    }
    let cfg = DecoderConfig {
        alpha: a.alpha,
        beta: a.beta,
        beam_size: a.beam_size,
        beam_threshold: a.beam_threshold,
        mode: match a.mode {
            ModeArg::Max => DecodeMode::Max,
            ModeArg::Logadd => DecodeMode::LogAdd,
        },
        silence: match a.silence {
            SilenceArg::Optional => SilencePolicy::Optional,
            SilenceArg::Required => SilencePolicy::Required,
            SilenceArg::Never => SilencePolicy::Never,
        },
        max_words: a.max_words,
        nbest: a.nbest,
    };
    match decode(&f, &tr, &lm, &lexicon, &alphabet, &cfg) {
        Ok(results) => {
            for (rank, r) in results.iter().enumerate() {
                writeln!(
                    out,
                    "{}\t{:.6}\t{:.6}\t{:.6}\t{}",
                    rank + 1,
                    r.score,
                    r.acoustic,
                    r.lm,
                    r.text()
                )?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Err(e @ DecoderError::NoHypothesis { .. }) => {
            eprintln!("error: {e} (widen --beam-size or --beam-threshold)");
            Ok(ExitCode::from(EXIT_PRUNED))
        }
        Err(e) => Err(e.into()),
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    BufReader::new(file)
        .lines()
        .collect::<io::Result<_>>()
        .with_context(|| format!("reading {}", path.display()))
}

fn metric<F>(a: MetricArgs, score: F, name: &str, out: &mut impl Write) -> Result<()>
where
    F: Fn(&[String], &[String]) -> Result<MetricReport, letterspeech::metrics::MetricError>,
{
    let refs = read_lines(&a.reference)?;
    let hyps = read_lines(&a.hypothesis)?;
    let report = score(&refs, &hyps)?;
    if a.per_utterance {
        for (i, u) in report.utterances.iter().enumerate() {
            writeln!(out, "{}\t{}\t{}", i + 1, u.edits, u.ref_len)?;
        }
    }
    writeln!(
        out,
        "{name}\t{:.6}\tedits\t{}\treference_length\t{}\tutterances\t{}",
        report.rate,
        report.total_edits,
        report.total_ref_len,
        report.utterances.len()
    )?;
    Ok(())
}

fn bench(a: BenchArgs, threads: Option<usize>, seed: Option<u64>, out: &mut impl Write) -> Result<()> {
    let criteria: &[BenchCriterion] = match a.criterion {
        BenchCriterionArg::Asg => &[BenchCriterion::Asg],
        BenchCriterionArg::Ctc => &[BenchCriterion::Ctc],
        BenchCriterionArg::Both => &[BenchCriterion::Asg, BenchCriterion::Ctc],
    };
    let presets: &[fn(BenchCriterion, usize) -> BenchConfig] = match a.preset {
        PresetArg::Small => &[BenchConfig::small],
        PresetArg::Long => &[BenchConfig::long],
        PresetArg::Both => &[BenchConfig::small, BenchConfig::long],
    };
    let mut results = Vec::new();
    for &batch in &a.batch {
        for &criterion in criteria {
            for preset in presets {
                let base = preset(criterion, batch);
                let cfg = BenchConfig {
                    frames: a.frames.unwrap_or(base.frames),
                    vocab: a.vocab.unwrap_or(base.vocab),
                    transcription_len: a.transcription_len.unwrap_or(base.transcription_len),
                    repetitions: a.repetitions,
                    warmup: a.warmup,
                    threads,
                    seed: seed.unwrap_or(base.seed),
                    ..base
                };
                results.push(run_bench(&cfg)?);
            }
        }
    }
    write!(out, "{}", format_table(&results))?;
    if let Some(path) = &a.csv {
        fs::write(path, to_csv(&results)?).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}
