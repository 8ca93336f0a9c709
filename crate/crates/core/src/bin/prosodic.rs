use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use prosodic::pipeline::{self, EvaluateOptions, PipelineConfig, RunOptions, SweepOptions};

#[derive(Parser)]
#[command(name = "prosodic", version, about = "Phone-level prosody tokens: extraction, codebooks, prediction, evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON pipeline config; defaults apply when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV with utterance_id,speaker_id,wav_path,align_path
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Work directory
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Recompute outputs that look up to date
    #[arg(long)]
    force: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Pitch and duration features per phone
    Extract(Common),
    /// Feature-space augmentation plan and doubled corpus
    Augment {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        features: Option<PathBuf>,
    },
    /// F0 centroids and duration intervals
    TrainCodebook {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        features: Vec<PathBuf>,
    },
    /// Token sequences from a codebook
    AssignLabels {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        features: Vec<PathBuf>,
        #[arg(long)]
        codebook: Option<PathBuf>,
    },
    /// Add unseen speakers to a codebook
    Adapt {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        codebook: Option<PathBuf>,
    },
    /// Decoded values for every cluster id
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        features: Vec<PathBuf>,
        #[arg(long)]
        codebook: Option<PathBuf>,
        /// Restrict to one utterance
        #[arg(long)]
        utterance: Option<String>,
        /// First cluster id
        #[arg(long)]
        from: Option<usize>,
        /// Last cluster id, inclusive
        #[arg(long)]
        to: Option<usize>,
    },
    /// Train the token predictor on a label file
    TrainPredictor {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        features: Vec<PathBuf>,
    },
    /// Predict tokens for the manifest's phone sequences
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Label accuracy and, with audio, MCD/FFE/VDE/GPE
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        predicted: Option<PathBuf>,
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Also score uniformly random labels drawn with this seed
        #[arg(long)]
        random_labels: Option<u64>,
        #[arg(long)]
        ref_audio: Option<PathBuf>,
        #[arg(long)]
        test_audio: Option<PathBuf>,
    },
}

fn options(c: Common) -> prosodic::Result<RunOptions> {
    let config = match &c.config {
        Some(p) => PipelineConfig::read(p)?,
        None => PipelineConfig::default(),
    };
    Ok(RunOptions {
        config,
        out: c.out,
        seed: c.seed,
        force: c.force,
        manifest: c.manifest,
    })
}

fn run(command: Command) -> prosodic::Result<()> {
    match command {
        Command::Extract(c) => {
            let s = pipeline::cmd_extract(&options(c)?)?;
            println!("extract: {} written, {} up to date", s.written, s.skipped);
        }
        Command::Augment { common, features } => {
            let n = pipeline::cmd_augment(&options(common)?, features.as_deref())?;
            println!("augment: {n} utterances");
        }
        Command::TrainCodebook { common, features } => {
            let book = pipeline::cmd_train_codebook(&options(common)?, &features)?;
            println!("train-codebook: k = {}, {} phonemes, {} speakers", book.k, book.durations.len(), book.speakers.len());
        }
        Command::AssignLabels { common, features, codebook } => {
            let labels = pipeline::cmd_assign_labels(&options(common)?, &features, codebook.as_deref())?;
            println!("assign-labels: {} utterances", labels.len());
        }
        Command::Adapt { common, codebook } => {
            let book = pipeline::cmd_adapt(&options(common)?, codebook.as_deref())?;
            println!("adapt: {} speakers", book.speakers.len());
        }
        Command::Sweep { common, features, codebook, utterance, from, to } => {
            let opts = options(common)?;
            let range = match (from, to) {
                (None, None) => None,
                (f, t) => Some(f.unwrap_or(0)..t.map_or(opts.config.clustering.k, |t| t + 1)),
            };
            let s = SweepOptions { features, codebook, utterance, range };
            print!("{}", pipeline::sweep_csv(&pipeline::cmd_sweep(&opts, &s)?));
        }
        Command::TrainPredictor { common, labels, features } => {
            let trace = pipeline::cmd_train_predictor(&options(common)?, labels.as_deref(), &features)?;
            if let Some(last) = trace.last() {
                println!(
                    "train-predictor: epoch {} {} loss {:.4}, accuracy f0 {:.3} dur {:.3}",
                    last.epoch,
                    last.split.as_str(),
                    last.loss,
                    last.accuracy_f0,
                    last.accuracy_dur
                );
            }
        }
        Command::Predict { common, model } => {
            let labels = pipeline::cmd_predict(&options(common)?, model.as_deref())?;
            println!("predict: {} utterances", labels.len());
        }
        Command::Evaluate { common, predicted, labels, random_labels, ref_audio, test_audio } => {
            let e = EvaluateOptions { predicted, labels, random_labels, ref_audio, test_audio };
            let ev = pipeline::cmd_evaluate(&options(common)?, &e)?;
            print!("{}", pipeline::label_report_csv(&ev.label_rows));
            if let Some(reports) = &ev.audio {
                print!("{}", prosodic::metrics::report_csv(reports));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
