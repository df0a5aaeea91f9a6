use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use letterspeech::acoustic::synth::{generate, SynthConfig};
use letterspeech::alphabet::Alphabet;
use letterspeech::bench::from_csv;
use letterspeech::criterion::asg_loss;
use letterspeech::decoder::{exhaustive_decode, DecoderConfig};
use letterspeech::io::{load_emissions, load_transitions, write_wav};
use letterspeech::lm::{load_arpa, load_lexicon, smear, SmearMode};
use letterspeech::metrics::levenshtein;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_letterspeech"))
        .args(args)
        .env_remove("LETTERSPEECH_THREADS")
        .env_remove("LETTERSPEECH_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn uniform_asg_fixture_prints_two_log_four() {
    let o = run(&[
        "loss",
        "--emissions",
        p(&data("uniform_emissions.lstb")),
        "--transitions",
        p(&data("uniform_transitions.lstb")),
        "--labels",
        "1",
    ]);
    assert_eq!(stdout(&o).trim(), "2.77258872");
}

#[test]
fn tiny_losses_match_the_committed_enumeration() {
    let oracle = std::fs::read_to_string(data("tiny_loss_oracle.txt")).unwrap();
    let mut checked = 0;
    for line in oracle.lines().filter(|l| !l.starts_with('#')) {
        let cols: Vec<&str> = line.split('\t').collect();
        let (criterion, labels, want) = (cols[0], cols[1], cols[2].parse::<f64>().unwrap());
        let mut args = vec!["loss", "--criterion", criterion, "--labels", labels];
        let (em, tr) = (data("tiny_emissions.lstb"), data("tiny_transitions.lstb"));
        let lp = data("tiny_logprobs.lstb");
        if criterion == "asg" {
            args.extend(["--emissions", p(&em), "--transitions", p(&tr)]);
        } else {
            args.extend(["--emissions", p(&lp)]);
        }
        let got: f64 = stdout(&run(&args)).trim().parse().unwrap();
        assert!((got - want).abs() <= 1e-8 * want.abs(), "{criterion}: {got} vs {want}");
        checked += 1;
    }
    assert_eq!(checked, 2);
}

#[test]
fn gradient_dump_is_bit_identical_to_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let grad = dir.path().join("grad.csv");
    let (em, tr) = (data("tiny_emissions.lstb"), data("tiny_transitions.lstb"));
    stdout(&run(&[
        "loss",
        "--emissions",
        p(&em),
        "--transitions",
        p(&tr),
        "--labels",
        "0,2,1",
        "--grad",
        p(&grad),
    ]));
    let r = asg_loss(
        &load_emissions::<f64>(&em).unwrap(),
        &load_transitions::<f64>(&tr).unwrap(),
        &[0, 2, 1],
    )
    .unwrap();
    let text = std::fs::read_to_string(&grad).unwrap();
    let mut rows = 0;
    for line in text.lines().skip(1) {
        let c: Vec<&str> = line.split(',').collect();
        let (i, j): (usize, usize) = (c[1].parse().unwrap(), c[2].parse().unwrap());
        let v: f64 = c[3].parse().unwrap();
        let want = match c[0] {
            "emission" => r.d_emissions[(i, j)],
            "transition" => r.d_transitions[(i, j)],
            "start" => r.d_start[j],
            other => panic!("unknown kind {other}"),
        };
        assert_eq!(v.to_bits(), want.to_bits(), "{line}");
        rows += 1;
    }
    assert_eq!(rows, 5 * 3 + 3 * 3 + 3);
}

#[test]
fn infeasible_transcription_fails() {
    let o = run(&[
        "loss",
        "--emissions",
        p(&data("uniform_emissions.lstb")),
        "--transitions",
        p(&data("uniform_transitions.lstb")),
        "--labels",
        "0,1,2",
    ]);
    assert!(!o.status.success());
    assert!(!o.stderr.is_empty());
}

fn decode_args<'a>(extra: &[&'a str], arpa: &'a str) -> Vec<String> {
    let mut v: Vec<String> = vec![
        "decode".into(),
        "--emissions".into(),
        p(&data("abc_emissions.lstb")).into(),
        "--transitions".into(),
        p(&data("abc_transitions.lstb")).into(),
        "--arpa".into(),
        arpa.into(),
        "--lexicon".into(),
        p(&data("abc.lex")).into(),
        "--alphabet".into(),
        p(&data("abc_alphabet.txt")).into(),
        "--max-words".into(),
        "3".into(),
    ];
    v.extend(extra.iter().map(|s| s.to_string()));
    v
}

fn run_owned(args: &[String]) -> Output {
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    run(&refs)
}

#[test]
fn unpruned_decode_matches_the_golden_nbest_and_the_exhaustive_oracle() {
    let arpa = data("abc.arpa");
    let out = stdout(&run_owned(&decode_args(
        &["--beam-size", "1000000", "--beam-threshold", "inf", "--nbest", "5"],
        p(&arpa),
    )));
    let golden = std::fs::read_to_string(data("abc_decode_nbest.tsv")).unwrap();
    assert_eq!(out, golden);

    let alphabet = Alphabet::read(std::io::BufReader::new(
        std::fs::File::open(data("abc_alphabet.txt")).unwrap(),
    ))
    .unwrap();
    let lm = load_arpa(&arpa).unwrap();
    let lexicon = smear(&load_lexicon(data("abc.lex"), &alphabet).unwrap(), &lm, SmearMode::Max).unwrap();
    let f = load_emissions::<f64>(data("abc_emissions.lstb")).unwrap();
    let tr = load_transitions::<f64>(data("abc_transitions.lstb")).unwrap();
    let best = exhaustive_decode(&f, &tr, &lm, &lexicon, &alphabet, &DecoderConfig::exhaustive(), 3).unwrap();
    let top: Vec<&str> = golden.lines().next().unwrap().split('\t').collect();
    assert_eq!(top[0], "1");
    assert!((top[1].parse::<f64>().unwrap() - best.score).abs() < 1e-6);
    assert_eq!(top[4], best.text());
}

#[test]
fn narrow_beam_never_beats_a_wide_one() {
    let arpa = data("abc.arpa");
    let score = |beam: &str| -> f64 {
        let out = stdout(&run_owned(&decode_args(&["--beam-size", beam], p(&arpa))));
        out.split('\t').nth(1).unwrap().parse().unwrap()
    };
    assert!(score("1") <= score("1000") + 1e-9);
}

#[test]
fn decode_reports_pruning_failure_with_exit_two() {
    // two frames cannot hold the three letters of "cab"
    let dir = tempfile::tempdir().unwrap();
    let lex = dir.path().join("long.lex");
    std::fs::write(&lex, "cab\tc a b\n").unwrap();
    let em = dir.path().join("short.lstb");
    let f = load_emissions::<f32>(data("abc_emissions.lstb")).unwrap();
    let short = letterspeech::matrix::Matrix::from_fn(2, f.labels(), |i, j| f.get(i, j));
    letterspeech::io::save_emissions(&em, &letterspeech::criterion::EmissionTable::new(short)).unwrap();
    let o = run(&[
        "decode",
        "--emissions",
        p(&em),
        "--transitions",
        p(&data("abc_transitions.lstb")),
        "--arpa",
        p(&data("abc.arpa")),
        "--lexicon",
        p(&lex),
        "--alphabet",
        p(&data("abc_alphabet.txt")),
    ]);
    assert_eq!(
        o.status.code(),
        Some(2),
        "stderr: {}",
        String::from_utf8_lossy(&o.stderr)
    );
}

#[test]
fn missing_arpa_file_is_an_io_error() {
    let o = run_owned(&decode_args(&[], "/nonexistent/model.arpa"));
    assert!(!o.status.success());
    assert_ne!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("/nonexistent/model.arpa"), "{err}");
}

fn train(config: &Path, extra: &[&str]) -> (Output, tempfile::TempDir) {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["train-toy", "--config", p(config), "--output-dir", p(dir.path())];
    args.extend_from_slice(extra);
    (run(&args), dir)
}

#[test]
fn seeded_toy_training_reproduces_the_golden_curve() {
    let (o, dir) = train(&data("toy_small.toml"), &[]);
    stdout(&o);
    let curve = std::fs::read_to_string(dir.path().join("ler.csv")).unwrap();
    assert_eq!(curve, std::fs::read_to_string(data("toy_small_ler.csv")).unwrap());
    for f in ["model.ckpt", "transitions.lstb", "alphabet.txt"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    // thread count does not change the result
    let (o, dir) = train(&data("toy_small.toml"), &["--threads", "2"]);
    stdout(&o);
    assert_eq!(std::fs::read_to_string(dir.path().join("ler.csv")).unwrap(), curve);
}

fn variant_config(dir: &Path, edit: impl Fn(String) -> String) -> PathBuf {
    std::fs::copy(data("toy_net.cfg"), dir.join("toy_net.cfg")).unwrap();
    let text = edit(std::fs::read_to_string(data("toy_small.toml")).unwrap());
    let path = dir.join("config.toml");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn zero_learning_rate_gives_a_flat_curve() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = variant_config(dir.path(), |t| t.replace("learning_rate = 0.1", "learning_rate = 0.0"));
    let (o, out) = train(&cfg, &[]);
    stdout(&o);
    let curve = std::fs::read_to_string(out.path().join("ler.csv")).unwrap();
    let rows: Vec<Vec<f64>> = curve
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 4);
    for r in &rows {
        assert_eq!(r[2], rows[0][2]);
        assert!((r[1] - rows[0][1]).abs() <= 2e-6, "{curve}");
    }
}

#[test]
fn missing_config_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = variant_config(dir.path(), |t| t.replace("clip_norm = 1.0\n", ""));
    let (o, _) = train(&cfg, &[]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("clip_norm"), "{err}");
}

#[test]
fn features_then_viterbi_through_a_trained_checkpoint() {
    let (o, model) = train(&data("toy_small.toml"), &[]);
    stdout(&o);
    let utt = &generate(&SynthConfig {
        letters: vec!['a', 'b', 'c'],
        num_samples: 1,
        seed: 99,
        ..SynthConfig::default()
    })[0];
    let wav = model.path().join("utt.wav");
    write_wav(&wav, &utt.waveform).unwrap();
    let feats = model.path().join("utt.lstb");
    let msg = stdout(&run(&[
        "features",
        "--input",
        p(&wav),
        "--output",
        p(&feats),
        "--normalize",
    ]));
    assert!(msg.contains("x 39 dims"), "{msg}");
    let out = stdout(&run(&[
        "viterbi",
        "--features",
        p(&feats),
        "--checkpoint",
        p(&model.path().join("model.ckpt")),
        "--transitions",
        p(&model.path().join("transitions.lstb")),
        "--alphabet",
        p(&model.path().join("alphabet.txt")),
    ]));
    let text = out.lines().find_map(|l| l.strip_prefix("text\t")).unwrap();
    assert!(text.chars().all(|c| "abc".contains(c)), "{out}");
    let ref_chars: Vec<char> = utt.transcription.chars().collect();
    let hyp_chars: Vec<char> = text.chars().collect();
    assert!(levenshtein(&ref_chars, &hyp_chars) <= ref_chars.len());
}

#[test]
fn error_rates_from_line_aligned_files() {
    let dir = tempfile::tempdir().unwrap();
    let (r, h) = (dir.path().join("ref.txt"), dir.path().join("hyp.txt"));
    std::fs::write(&r, "kitten\ncat\n").unwrap();
    std::fs::write(&h, "sitting\ncat\n").unwrap();
    let out = stdout(&run(&[
        "ler",
        "--reference",
        p(&r),
        "--hypothesis",
        p(&h),
        "--per-utterance",
    ]));
    assert_eq!(
        out,
        "1\t3\t6\n2\t0\t3\nler\t0.333333\tedits\t3\treference_length\t9\tutterances\t2\n"
    );
    std::fs::write(&r, "the cat sat\n").unwrap();
    std::fs::write(&h, "the bat sat down\n").unwrap();
    let out = stdout(&run(&["wer", "--reference", p(&r), "--hypothesis", p(&h)]));
    assert!(out.starts_with("wer\t0.666667\tedits\t2\t"), "{out}");
    std::fs::write(&h, "a\nb\nc\n").unwrap();
    assert!(!run(&["wer", "--reference", p(&r), "--hypothesis", p(&h)])
        .status
        .success());
}

fn bench_csv(repetitions: &str, dir: &Path) -> Vec<letterspeech::bench::BenchResult> {
    let csv = dir.join(format!("bench_{repetitions}.csv"));
    let table = stdout(&run(&[
        "bench",
        "--criterion",
        "asg",
        "--preset",
        "small",
        "--batch",
        "2",
        "--repetitions",
        repetitions,
        "--seed",
        "5",
        "--csv",
        p(&csv),
    ]));
    assert!(table.starts_with("criterion"), "{table}");
    let text = std::fs::read_to_string(&csv).unwrap();
    let parsed = from_csv(&text).unwrap();
    assert_eq!(letterspeech::bench::to_csv(&parsed).unwrap(), text);
    parsed
}

#[test]
fn bench_csv_round_trips_and_medians_are_stable() {
    let dir = tempfile::tempdir().unwrap();
    let a = bench_csv("20", dir.path());
    let b = bench_csv("40", dir.path());
    assert_eq!((a.len(), b.len()), (1, 1));
    assert_eq!((a[0].frames, a[0].batch_size, b[0].repetitions), (150, 2, 40));
    let ratio = b[0].median_ms / a[0].median_ms;
    assert!(
        (0.8..=1.2).contains(&ratio),
        "medians {} and {}",
        a[0].median_ms,
        b[0].median_ms
    );
}

#[test]
fn invalid_bench_config_is_rejected() {
    let o = run(&["bench", "--preset", "small", "--repetitions", "2"]);
    assert!(!o.status.success());
    let o = run(&[
        "bench",
        "--preset",
        "small",
        "--frames",
        "10",
        "--transcription-len",
        "20",
    ]);
    assert!(!o.status.success());
}
