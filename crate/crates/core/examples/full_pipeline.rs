//! Every pipeline stage on a generated three-speaker corpus plus one unseen
//! speaker for adaptation.
//!
//! ```sh
//! cargo run --release --example full_pipeline -- /tmp/prosodic-demo
//! ```

use std::path::PathBuf;

use prosodic::pipeline::{self, EvaluateOptions, RunOptions, SweepOptions};
use prosodic::signal::{read_wav, write_wav, AudioBuffer};
use prosodic::synth::{default_voices, unseen_voice, write_synthetic_corpus};

fn main() -> prosodic::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let root = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("prosodic-demo"));
    let train_manifest = write_synthetic_corpus(root.join("corpus"), &default_voices(), 16, 4, 1)?;
    let new_manifest = write_synthetic_corpus(root.join("unseen"), &[unseen_voice()], 8, 4, 2)?;

    let mut opts = RunOptions::new(root.join("work"));
    opts.seed = 7;
    opts.manifest = Some(train_manifest.clone());
    let s = pipeline::cmd_extract(&opts)?;
    println!("extract: {} written, {} up to date", s.written, s.skipped);
    println!("augment: {} utterances", pipeline::cmd_augment(&opts, None)?);
    let book = pipeline::cmd_train_codebook(&opts, &[])?;
    println!("codebook: F0 centroids {:.3?}", book.f0_centroids);
    pipeline::cmd_assign_labels(&opts, &[], None)?;

    let adapt = RunOptions {
        manifest: Some(new_manifest),
        ..opts.clone()
    };
    let adapted = pipeline::cmd_adapt(&adapt, None)?;
    assert_eq!(adapted.content_hash(), book.content_hash());

    let rows = pipeline::cmd_sweep(&opts, &SweepOptions::default())?;
    print!("{}", pipeline::sweep_csv(&rows));

    let trace = pipeline::cmd_train_predictor(&opts, None, &[])?;
    let last = trace.last().unwrap();
    println!("predictor after {} epochs: loss {:.4}", last.epoch, last.loss);
    pipeline::cmd_predict(&opts, None)?;

    // a degraded copy of each waveform stands in for resynthesized audio
    let manifest = pipeline::read_manifest(&train_manifest)?;
    let (ref_dir, test_dir) = (root.join("eval/ref"), root.join("eval/test"));
    for d in [&ref_dir, &test_dir] {
        std::fs::create_dir_all(d).map_err(|e| prosodic::Error::Io { path: d.clone(), source: e })?;
    }
    for e in manifest.iter().take(4) {
        let audio = read_wav(&e.wav_path)?;
        write_wav(ref_dir.join(format!("{}.wav", e.utterance_id)), &audio)?;
        let degraded: Vec<f64> = audio
            .samples
            .iter()
            .enumerate()
            .map(|(i, &x)| 0.8 * x + 0.01 * ((i * 7919 % 200) as f64 / 100.0 - 1.0))
            .collect();
        write_wav(
            test_dir.join(format!("{}.wav", e.utterance_id)),
            &AudioBuffer::new(degraded, audio.sample_rate),
        )?;
    }
    let ev = pipeline::cmd_evaluate(
        &opts,
        &EvaluateOptions {
            random_labels: Some(3),
            ref_audio: Some(ref_dir),
            test_audio: Some(test_dir),
            ..EvaluateOptions::default()
        },
    )?;
    print!("{}", pipeline::label_report_csv(&ev.label_rows));
    print!("{}", prosodic::metrics::report_csv(ev.audio.as_deref().unwrap_or_default()));
    println!("outputs in {}", opts.out.display());
    Ok(())
}
