use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use prosodic::clustering::{read_labels, ProsodyCodebook};
use prosodic::features::{read_corpus, Corpus};
use prosodic::synth::{default_voices, unseen_voice, write_synthetic_corpus, Voice};

fn prosodic(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_prosodic"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = prosodic(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
    manifest: PathBuf,
    work: PathBuf,
}

fn fixture(voices: &[Voice], per_voice: usize) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let manifest = write_synthetic_corpus(root.join("corpus"), voices, per_voice, 4, 3).unwrap();
    Fixture {
        work: root.join("work"),
        _dir: dir,
        root,
        manifest,
    }
}

fn common<'a>(f: &'a Fixture, extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec!["--manifest", s(&f.manifest), "--out", s(&f.work), "--seed", "4"];
    v.extend_from_slice(extra);
    v
}

fn run(cmd: &str, f: &Fixture, extra: &[&str]) -> String {
    let mut args = vec![cmd];
    args.extend(common(f, extra));
    ok(&args)
}

#[test]
fn extract_writes_one_file_per_utterance_and_is_idempotent() {
    let f = fixture(&default_voices()[..1], 3);
    assert!(run("extract", &f, &[]).contains("3 written"));
    let corpus = read_corpus(f.work.join("features")).unwrap();
    assert_eq!(corpus.len(), 3);
    let file = f.work.join("features/spk_low_000.prosody.csv");
    let stamp = std::fs::metadata(&file).unwrap().modified().unwrap();
    assert!(run("extract", &f, &[]).contains("0 written, 3 up to date"));
    assert_eq!(std::fs::metadata(&file).unwrap().modified().unwrap(), stamp);
    assert!(run("extract", &f, &["--force"]).contains("3 written"));
}

#[test]
fn missing_wav_names_the_utterance_and_fails() {
    let f = fixture(&default_voices()[..1], 3);
    std::fs::remove_file(f.root.join("corpus/wav/spk_low_001.wav")).unwrap();
    let mut args = vec!["extract"];
    args.extend(common(&f, &[]));
    let out = prosodic(&args);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("spk_low_001"), "{err}");
    // the other utterances are still written
    assert_eq!(read_corpus(f.work.join("features")).unwrap().len(), 2);
}

#[test]
fn unknown_config_keys_are_rejected() {
    let f = fixture(&default_voices()[..1], 1);
    let cfg = f.root.join("cfg.json");
    std::fs::write(&cfg, r#"{"clustering": {"k": 15, "restart": 3}}"#).unwrap();
    let mut args = vec!["extract", "--config", s(&cfg)];
    args.extend(common(&f, &[]));
    let out = prosodic(&args);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("restart"));
}

fn write_features(dir: &Path, corpus: &Corpus) {
    std::fs::create_dir_all(dir).unwrap();
    prosodic::features::write_corpus(dir, corpus).unwrap();
}

#[test]
fn constant_pitch_speaker_is_degenerate() {
    let f = fixture(&default_voices()[..2], 4);
    run("extract", &f, &[]);
    let mut corpus = read_corpus(f.work.join("features")).unwrap();
    for u in corpus.values_mut().filter(|u| u.speaker == "spk_mid") {
        u.phones.iter_mut().for_each(|p| p.mean_log_f0 = 5.0);
    }
    let flat = f.root.join("flat");
    write_features(&flat, &corpus);
    let mut args = vec!["train-codebook", "--features", s(&flat)];
    args.extend(common(&f, &[]));
    let out = prosodic(&args);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("spk_mid"));
}

#[test]
fn codebook_stage_is_deterministic_and_guards_k() {
    let f = fixture(&default_voices(), 4);
    run("extract", &f, &[]);
    run("augment", &f, &[]);
    run("train-codebook", &f, &[]);
    let first = std::fs::read(f.work.join("codebook.json")).unwrap();
    run("train-codebook", &f, &[]);
    assert_eq!(std::fs::read(f.work.join("codebook.json")).unwrap(), first);
    let book = ProsodyCodebook::read(f.work.join("codebook.json")).unwrap();
    assert_eq!(book.f0_centroids.len(), 15);
    assert!(book.f0_centroids.windows(2).all(|w| w[0] < w[1]));
    // `#aug` speakers are separate entries
    assert_eq!(book.speakers.len(), 6);

    let cfg = f.root.join("k8.json");
    std::fs::write(&cfg, r#"{"clustering": {"k": 8}}"#).unwrap();
    let mut args = vec!["assign-labels", "--config", s(&cfg)];
    args.extend(common(&f, &[]));
    let out = prosodic(&args);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("k = 15"));
}

#[test]
fn sweep_of_a_single_phone_returns_raw_codebook_values() {
    let f = fixture(&default_voices(), 4);
    run("extract", &f, &[]);
    run("train-codebook", &f, &[]);
    let book = ProsodyCodebook::read(f.work.join("codebook.json")).unwrap();
    let mut corpus = read_corpus(f.work.join("features")).unwrap();
    let mut utt = corpus.pop_first().unwrap().1;
    utt.phones.truncate(1);
    let one = f.root.join("one");
    write_features(&one, &Corpus::from([(utt.id.clone(), utt.clone())]));
    let out = run("sweep", &f, &["--features", s(&one)]);
    let rows: Vec<Vec<f64>> = out
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("cluster_id"))
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 15);
    let stats = &book.speakers[&utt.speaker];
    let reps = &book.durations[&utt.phones[0].label].representatives;
    for (c, row) in rows.iter().enumerate() {
        assert_eq!(row[1], book.f0_centroids[c]);
        assert_eq!(row[2], stats.denormalize(book.f0_centroids[c]).exp());
        assert_eq!(row[3], reps[c]);
    }
    assert!(out.starts_with("# values are decoded"));

    let bad = prosodic(&[&["sweep"][..], &common(&f, &["--from", "3", "--to", "15"])].concat());
    assert!(!bad.status.success());
}

#[test]
fn adaptation_keeps_clusters_and_overwrites_stats() {
    let f = fixture(&default_voices(), 4);
    run("extract", &f, &[]);
    run("train-codebook", &f, &[]);
    let before = ProsodyCodebook::read(f.work.join("codebook.json")).unwrap();
    let new = write_synthetic_corpus(f.root.join("new"), &[unseen_voice()], 4, 4, 9).unwrap();
    let adapt = |extra: &[&str]| {
        let mut args = vec!["adapt", "--manifest", s(&new), "--out", s(&f.work)];
        args.extend_from_slice(extra);
        ok(&args)
    };
    adapt(&[]);
    let once = ProsodyCodebook::read(f.work.join("codebook.json")).unwrap();
    adapt(&[]);
    let twice = ProsodyCodebook::read(f.work.join("codebook.json")).unwrap();
    assert_eq!(once.f0_centroids, before.f0_centroids);
    assert_eq!(once.durations, before.durations);
    assert_eq!(once.speakers.len(), before.speakers.len() + 1);
    assert_eq!(twice, once);
}

#[test]
fn predictor_round_trip_and_label_evaluation() {
    let f = fixture(&default_voices(), 4);
    let cfg = f.root.join("cfg.json");
    std::fs::write(&cfg, r#"{"predictor": {"epochs": 5}, "workers": 2}"#).unwrap();
    let c = ["--config", s(&cfg)];
    run("extract", &f, &c);
    run("augment", &f, &c);
    run("train-codebook", &f, &c);
    run("assign-labels", &f, &c);
    run("train-predictor", &f, &c);
    let trace = std::fs::read_to_string(f.work.join("loss_trace.csv")).unwrap();
    assert!(trace.starts_with("epoch,split,loss,accuracy_f0,accuracy_dur\n0,train,"));
    run("predict", &f, &c);
    let predicted = read_labels(f.work.join("predicted_labels.csv")).unwrap();
    assert_eq!(predicted.len(), 12);
    assert!(predicted.iter().all(|l| l.f0_tokens.iter().chain(&l.dur_tokens).all(|&t| t < 15)));

    let report = run("evaluate", &f, &[&c[..], &["--random-labels", "1"]].concat());
    assert!(report.starts_with("system,positions,accuracy_f0,accuracy_dur,mae_f0,mae_dur,accuracy,mae\n"));
    assert!(report.contains("\npredictor,") && report.contains("\nrandom,"));
    assert!(f.work.join("label_report.csv").exists());
    assert!(!f.work.join("report.csv").exists());

    let labels = f.work.join("labels.csv");
    let gt = run("evaluate", &f, &[&c[..], &["--predicted", s(&labels)]].concat());
    let row: Vec<&str> = gt.lines().nth(1).unwrap().split(',').collect();
    assert_eq!((row[6], row[7]), ("1", "0"));

    let model = f.work.join("predictor.json");
    let text = std::fs::read_to_string(&model).unwrap();
    let old = f.root.join("old.json");
    std::fs::write(&old, text.replace("\"format_version\":1", "\"format_version\":0")).unwrap();
    let out = prosodic(&[&["predict"][..], &common(&f, &[&c[..], &["--model", s(&old)]].concat())].concat());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("format version"));
}

#[test]
fn commands_without_required_inputs_fail() {
    let dir = tempfile::tempdir().unwrap();
    let out = s(dir.path());
    for cmd in ["extract", "adapt", "predict"] {
        assert!(!prosodic(&[cmd, "--out", out]).status.success(), "{cmd}");
    }
    for cmd in ["augment", "train-codebook", "assign-labels", "sweep", "train-predictor", "evaluate"] {
        assert!(!prosodic(&[cmd, "--out", out]).status.success(), "{cmd}");
    }
}
