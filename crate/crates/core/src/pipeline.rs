//! File-based stages behind the command-line tool.
//!
//! Every stage reads from and writes into one work directory:
//!
//! ```text
//! features/            extract        one <id>.prosody.csv per utterance
//! augment_plan.csv     augment
//! features_aug/        augment        originals plus #aug copies
//! codebook.json        train-codebook, adapt
//! labels.csv           assign-labels
//! adapt_features/      adapt
//! adapt_labels.csv     adapt
//! sweep.csv            sweep
//! predictor.json       train-predictor
//! loss_trace.csv       train-predictor
//! predicted_labels.csv predict
//! label_report.csv     evaluate
//! report.csv           evaluate, when audio is given
//! <stage>.stage.json   every stage: k, config hash, seed
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::SystemTime;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::alignment::{parse_alignment, phoneme_prosody};
use crate::augment::{augment_corpus, make_plan, RateSemantics};
use crate::clustering::{
    build_label_sequence, read_labels, train_codebook, write_labels, ClusteringConfig, LabelSequence,
    ProsodyCodebook,
};
use crate::error::{Error, Result};
use crate::features::{feature_file_name, read_corpus, write_corpus, Corpus, Utterance};
use crate::metrics::{compare_audio, report_csv, MetricsConfig};
use crate::pitch::{extract_log_f0, PitchConfig};
use crate::predictor::{
    loss_trace_csv, model_for, predict_labels, random_labels, read_checkpoint, score_labels, train,
    write_checkpoint, LabelScores, PredictorConfig, TrainingUtterance,
};
use crate::signal::read_wav;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentationConfig {
    /// Plan seed; the command-line seed is used when absent.
    pub seed: Option<u64>,
    pub rate_semantics: RateSemantics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub pitch: PitchConfig,
    pub clustering: ClusteringConfig,
    pub augmentation: AugmentationConfig,
    pub predictor: PredictorConfig,
    pub metrics: MetricsConfig,
    /// Worker threads for per-utterance stages.
    pub workers: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            pitch: PitchConfig::default(),
            clustering: ClusteringConfig::default(),
            augmentation: AugmentationConfig::default(),
            predictor: PredictorConfig::default(),
            metrics: MetricsConfig::default(),
            workers: 4,
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str, origin: &Path) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|source| Error::Json {
            path: origin.to_path_buf(),
            source,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path)
    }

    /// Checks that do not depend on the audio sample rate.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        let p = &self.pitch;
        if !(p.frame_sec > 0.0 && p.hop_sec > 0.0 && p.f0_min > 0.0 && p.f0_min < p.f0_max) {
            return bad("pitch needs positive frame_sec, hop_sec and 0 < f0_min < f0_max");
        }
        let c = &self.clustering;
        if c.k == 0 || c.restarts == 0 || c.max_iter == 0 || !(c.tol >= 0.0) {
            return bad("clustering needs k, restarts, max_iter >= 1 and tol >= 0");
        }
        let r = &self.predictor;
        if r.batch == 0 || r.phone_dim == 0 || r.hidden == 0 || r.hidden2 == 0 || !(0.0..1.0).contains(&r.valid_fraction)
        {
            return bad("predictor needs batch and layer sizes >= 1 and valid_fraction in [0, 1)");
        }
        if !(r.lr >= 0.0 && r.weight_decay >= 0.0) {
            return bad("predictor needs lr >= 0 and weight_decay >= 0");
        }
        let m = &self.metrics;
        if !(m.gpe_threshold > 0.0) || m.mcd_first >= m.n_cepstra || m.n_cepstra > m.n_mels {
            return bad("metrics needs gpe_threshold > 0 and mcd_first < n_cepstra <= n_mels");
        }
        if self.workers == 0 {
            return bad("workers must be at least 1");
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let body = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(body))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub utterance_id: String,
    pub speaker_id: String,
    pub wav_path: PathBuf,
    pub align_path: PathBuf,
}

#[derive(Deserialize)]
struct ManifestRow {
    utterance_id: String,
    speaker_id: String,
    wav_path: PathBuf,
    align_path: PathBuf,
}

fn check_id(id: &str, what: &str, path: &Path, line: usize) -> Result<()> {
    let ok = !id.is_empty()
        && !id.starts_with('.')
        && !id.contains(crate::augment::AUG_SUFFIX)
        && id.chars().all(|c| c.is_ascii_alphanumeric() || "_-.".contains(c));
    if ok {
        Ok(())
    } else {
        Err(Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("{what} {id:?} must be non-empty [A-Za-z0-9_.-] not starting with '.'"),
        })
    }
}

/// Reads `utterance_id,speaker_id,wav_path,align_path`. Relative paths are
/// resolved against the manifest's directory.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or(Path::new(""));
    let mut reader = csv::Reader::from_path(path).map_err(|source| Error::Csv {
        path: path.to_path_buf(),
        source,
    })?;
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (i, row) in reader.deserialize::<ManifestRow>().enumerate() {
        let line = i + 2;
        let row = row.map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        check_id(&row.utterance_id, "utterance id", path, line)?;
        check_id(&row.speaker_id, "speaker id", path, line)?;
        if !seen.insert(row.utterance_id.clone()) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("duplicate utterance id {:?}", row.utterance_id),
            });
        }
        out.push(ManifestEntry {
            utterance_id: row.utterance_id,
            speaker_id: row.speaker_id,
            wav_path: base.join(row.wav_path),
            align_path: base.join(row.align_path),
        });
    }
    if out.is_empty() {
        return Err(Error::Empty("manifest"));
    }
    Ok(out)
}

/// Metadata written next to every stage output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageInfo {
    pub stage: String,
    pub k: usize,
    pub config_hash: String,
    pub seed: u64,
}

/// Options shared by every command.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub config: PipelineConfig,
    pub out: PathBuf,
    pub seed: u64,
    pub force: bool,
    pub manifest: Option<PathBuf>,
}

impl RunOptions {
    pub fn new(out: impl Into<PathBuf>) -> Self {
        Self {
            config: PipelineConfig::default(),
            out: out.into(),
            seed: 0,
            force: false,
            manifest: None,
        }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn manifest(&self, command: &str) -> Result<Vec<ManifestEntry>> {
        match &self.manifest {
            Some(p) => read_manifest(p),
            None => Err(Error::InvalidConfig(format!("{command} needs --manifest"))),
        }
    }

    fn stage_path(&self, stage: &str) -> PathBuf {
        self.path(&format!("{stage}.stage.json"))
    }

    fn write_stage(&self, stage: &str) -> Result<()> {
        let info = StageInfo {
            stage: stage.to_string(),
            k: self.config.clustering.k,
            config_hash: self.config.hash(),
            seed: self.seed,
        };
        let mut text = serde_json::to_string_pretty(&info).expect("stage info serializes");
        text.push('\n');
        crate::io::write_atomic(&self.stage_path(stage), text.as_bytes())
    }

    fn read_stage(&self, stage: &str) -> Result<Option<StageInfo>> {
        let path = self.stage_path(stage);
        if !path.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text)
            .map(Some)
            .map_err(|source| Error::Json { path, source })
    }

    /// Refuses inputs produced under a different clustering `k`.
    fn require_k(&self, what: &str, k: usize) -> Result<()> {
        if k != self.config.clustering.k {
            return Err(Error::StageMismatch(format!(
                "{what} was produced with k = {k}, config has k = {}",
                self.config.clustering.k
            )));
        }
        Ok(())
    }

    fn require_stage_k(&self, stage: &str) -> Result<()> {
        if let Some(info) = self.read_stage(stage)? {
            self.require_k(&format!("{stage} output"), info.k)?;
        }
        Ok(())
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.config.workers)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("worker pool: {e}")))
    }

    fn create_out(&self, sub: Option<&str>) -> Result<PathBuf> {
        let dir = sub.map_or_else(|| self.out.clone(), |s| self.out.join(s));
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(dir)
    }
}

fn batch_result(failures: Vec<(String, Error)>) -> Result<()> {
    if failures.is_empty() {
        return Ok(());
    }
    for (id, e) in &failures {
        log::error!("{id}: {e}");
    }
    let summary = failures
        .iter()
        .take(5)
        .map(|(id, e)| format!("{id}: {e}"))
        .collect::<Vec<_>>()
        .join("; ");
    Err(Error::Batch {
        count: failures.len(),
        summary,
    })
}

/// Phone-level features of one manifest entry.
pub fn extract_utterance(entry: &ManifestEntry, cfg: &PitchConfig) -> Result<Utterance> {
    let audio = read_wav(&entry.wav_path)?;
    let segments = parse_alignment(&entry.align_path)?;
    let (_, log_f0) = extract_log_f0(&audio, cfg)?;
    let phones = phoneme_prosody(&log_f0, &segments)?;
    Ok(Utterance {
        id: entry.utterance_id.clone(),
        speaker: entry.speaker_id.clone(),
        phones,
    })
}

fn modified(path: &Path) -> Option<SystemTime> {
    std::fs::metadata(path).and_then(|m| m.modified()).ok()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExtractSummary {
    pub written: usize,
    pub skipped: usize,
}

fn extract_into(opts: &RunOptions, entries: &[ManifestEntry], sub: &str, stage: &str) -> Result<ExtractSummary> {
    let dir = opts.create_out(Some(sub))?;
    let same_config = opts
        .read_stage(stage)?
        .is_some_and(|s| s.config_hash == opts.config.hash());
    let results: Vec<(String, Result<bool>)> = opts.pool()?.install(|| {
        entries
            .par_iter()
            .map(|e| {
                let out = dir.join(feature_file_name(&e.utterance_id));
                let fresh = match (modified(&out), modified(&e.wav_path), modified(&e.align_path)) {
                    (Some(o), Some(w), Some(a)) => o >= w && o >= a,
                    _ => false,
                };
                let r = if same_config && fresh && !opts.force {
                    Ok(false)
                } else {
                    extract_utterance(e, &opts.config.pitch).and_then(|u| u.write(&out)).map(|_| true)
                };
                (e.utterance_id.clone(), r)
            })
            .collect()
    });
    let mut summary = ExtractSummary { written: 0, skipped: 0 };
    let mut failures = Vec::new();
    for (id, r) in results {
        match r {
            Ok(true) => summary.written += 1,
            Ok(false) => summary.skipped += 1,
            Err(e) => failures.push((id, e)),
        }
    }
    if failures.is_empty() && (summary.written > 0 || !same_config) {
        opts.write_stage(stage)?;
    }
    log::info!("{stage}: {} written, {} up to date", summary.written, summary.skipped);
    batch_result(failures)?;
    Ok(summary)
}

/// Pitch extraction, smoothing, log transform and phone aggregation for
/// every manifest entry. Up-to-date outputs are kept unless forced.
pub fn cmd_extract(opts: &RunOptions) -> Result<ExtractSummary> {
    let entries = opts.manifest("extract")?;
    extract_into(opts, &entries, "features", "extract")
}

fn default_features(opts: &RunOptions) -> PathBuf {
    let aug = opts.path("features_aug");
    if aug.is_dir() {
        aug
    } else {
        opts.path("features")
    }
}

fn read_corpora(dirs: &[PathBuf]) -> Result<Corpus> {
    let mut corpus = Corpus::new();
    for dir in dirs {
        for (id, utt) in read_corpus(dir)? {
            if corpus.insert(id.clone(), utt).is_some() {
                return Err(Error::StageMismatch(format!("utterance {id} appears in more than one feature directory")));
            }
        }
    }
    if corpus.is_empty() {
        return Err(Error::Empty("feature corpus"));
    }
    Ok(corpus)
}

/// Assigns one of the twelve transforms to every utterance and writes the
/// doubled corpus.
pub fn cmd_augment(opts: &RunOptions, features: Option<&Path>) -> Result<usize> {
    let src = features.map_or_else(|| opts.path("features"), Path::to_path_buf);
    let mut corpus = read_corpus(&src)?;
    if corpus.is_empty() {
        return Err(Error::Empty("feature corpus"));
    }
    if opts.manifest.is_some() {
        let keep: BTreeSet<String> = opts.manifest("augment")?.into_iter().map(|e| e.utterance_id).collect();
        corpus.retain(|id, _| keep.contains(id));
    }
    let ids: Vec<&String> = corpus.keys().collect();
    let plan = make_plan(&ids, opts.config.augmentation.seed.unwrap_or(opts.seed))?;
    let doubled = augment_corpus(&corpus, &plan, opts.config.augmentation.rate_semantics)?;
    opts.create_out(None)?;
    plan.write(opts.path("augment_plan.csv"))?;
    let dir = opts.create_out(Some("features_aug"))?;
    write_corpus(&dir, &doubled)?;
    opts.write_stage("augment")?;
    log::info!("augment: {} utterances -> {}", corpus.len(), doubled.len());
    Ok(doubled.len())
}

/// Trains the codebook on a feature directory, `features_aug/` by default
/// when it exists and `features/` otherwise.
pub fn cmd_train_codebook(opts: &RunOptions, features: &[PathBuf]) -> Result<ProsodyCodebook> {
    let dirs = if features.is_empty() {
        vec![default_features(opts)]
    } else {
        features.to_vec()
    };
    let corpus = read_corpora(&dirs)?;
    let (mut book, warnings) = train_codebook(&corpus, &opts.config.clustering, opts.seed)?;
    for w in &warnings {
        log::warn!("{w:?}");
    }
    book.config_hash = Some(opts.config.hash());
    opts.create_out(None)?;
    book.write(opts.path("codebook.json"))?;
    opts.write_stage("train-codebook")?;
    Ok(book)
}

fn load_codebook(opts: &RunOptions, path: Option<&Path>) -> Result<ProsodyCodebook> {
    let path = path.map_or_else(|| opts.path("codebook.json"), Path::to_path_buf);
    let book = ProsodyCodebook::read(&path)?;
    opts.require_k(&format!("codebook {}", path.display()), book.k)?;
    Ok(book)
}

fn label_corpus(corpus: &Corpus, book: &ProsodyCodebook) -> Result<Vec<LabelSequence>> {
    let mut failures = Vec::new();
    let mut out = Vec::new();
    for utt in corpus.values() {
        match build_label_sequence(utt, book) {
            Ok(l) => out.push(l),
            Err(e) => failures.push((utt.id.clone(), e)),
        }
    }
    batch_result(failures)?;
    Ok(out)
}

/// Nearest-centroid F0 tokens and interval duration tokens for every utterance.
pub fn cmd_assign_labels(opts: &RunOptions, features: &[PathBuf], codebook: Option<&Path>) -> Result<Vec<LabelSequence>> {
    let book = load_codebook(opts, codebook)?;
    let dirs = if features.is_empty() {
        vec![default_features(opts)]
    } else {
        features.to_vec()
    };
    let labels = label_corpus(&read_corpora(&dirs)?, &book)?;
    opts.create_out(None)?;
    write_labels(opts.path("labels.csv"), &labels)?;
    opts.write_stage("labels")?;
    Ok(labels)
}

/// Adds per-speaker stats for every speaker in the manifest. Centroids and
/// duration intervals are carried over unchanged.
pub fn cmd_adapt(opts: &RunOptions, codebook: Option<&Path>) -> Result<ProsodyCodebook> {
    let entries = opts.manifest("adapt")?;
    let mut book = load_codebook(opts, codebook)?;
    let before = book.content_hash();
    extract_into(opts, &entries, "adapt_features", "adapt-extract")?;
    let keep: BTreeSet<&str> = entries.iter().map(|e| e.utterance_id.as_str()).collect();
    let mut corpus = read_corpus(opts.path("adapt_features"))?;
    corpus.retain(|id, _| keep.contains(id.as_str()));

    let mut by_speaker: BTreeMap<&str, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for utt in corpus.values() {
        let e = by_speaker.entry(&utt.speaker).or_default();
        e.0.extend(utt.phones.iter().map(|p| p.mean_log_f0));
        e.1.extend(utt.phones.iter().map(|p| p.duration));
    }
    for (speaker, (f0, dur)) in &by_speaker {
        book.adapt(speaker, f0, dur)?;
    }
    debug_assert_eq!(before, book.content_hash());
    let labels = label_corpus(&corpus, &book)?;
    book.write(opts.path("codebook.json"))?;
    write_labels(opts.path("adapt_labels.csv"), &labels)?;
    opts.write_stage("adapt")?;
    Ok(book)
}

/// One row of the sweep report.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub cluster_id: usize,
    pub centroid: f64,
    pub mean_f0_hz: f64,
    pub mean_duration: f64,
    pub positions: usize,
}

pub const SWEEP_HEADER: &str = "# values are decoded from the codebook, no audio is synthesized: \
f0 maps each centroid through the utterance speaker's stats, duration is the phoneme interval representative";

/// Every token position set to the same cluster id, for each id in `range`.
pub fn sweep(corpus: &Corpus, book: &ProsodyCodebook, range: std::ops::Range<usize>) -> Result<Vec<SweepRow>> {
    if range.is_empty() || range.end > book.k {
        return Err(Error::OutOfRange(format!("cluster range {range:?} not within 0..{}", book.k)));
    }
    let mut rows = Vec::new();
    for c in range {
        let (mut f0, mut dur, mut n) = (0.0, 0.0, 0usize);
        for utt in corpus.values() {
            let stats = book
                .speakers
                .get(&utt.speaker)
                .ok_or_else(|| Error::UnknownSpeaker(utt.speaker.clone()))?;
            let centroid = book.decode_f0(c).expect("range checked");
            for p in &utt.phones {
                let rep = book
                    .decode_duration(c, &p.label)
                    .ok_or_else(|| Error::UnknownPhoneme(p.label.clone()))?;
                let d = match book.duration_speakers.get(&utt.speaker) {
                    Some(s) if book.duration_normalized => s.denormalize(rep),
                    _ => rep,
                };
                f0 += stats.denormalize(centroid).exp();
                dur += d;
                n += 1;
            }
        }
        if n == 0 {
            return Err(Error::Empty("phones to sweep"));
        }
        rows.push(SweepRow {
            cluster_id: c,
            centroid: book.f0_centroids[c],
            mean_f0_hz: f0 / n as f64,
            mean_duration: dur / n as f64,
            positions: n,
        });
    }
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = format!("{SWEEP_HEADER}\ncluster_id,centroid,mean_f0_hz,mean_duration_sec,positions\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.cluster_id, r.centroid, r.mean_f0_hz, r.mean_duration, r.positions
        )
        .unwrap();
    }
    out
}

#[derive(Debug, Clone, Default)]
pub struct SweepOptions {
    pub features: Vec<PathBuf>,
    pub codebook: Option<PathBuf>,
    pub utterance: Option<String>,
    pub range: Option<std::ops::Range<usize>>,
}

/// Writes `sweep.csv`. Features default to `features/` plus
/// `adapt_features/` when present.
pub fn cmd_sweep(opts: &RunOptions, s: &SweepOptions) -> Result<Vec<SweepRow>> {
    let book = load_codebook(opts, s.codebook.as_deref())?;
    let dirs = if s.features.is_empty() {
        let mut d = vec![opts.path("features")];
        if opts.path("adapt_features").is_dir() {
            d.push(opts.path("adapt_features"));
        }
        d
    } else {
        s.features.clone()
    };
    let mut corpus = read_corpora(&dirs)?;
    if let Some(id) = &s.utterance {
        let utt = corpus.remove(id).ok_or_else(|| Error::UnknownUtterance(id.clone()))?;
        corpus = Corpus::from([(id.clone(), utt)]);
    }
    let rows = sweep(&corpus, &book, s.range.clone().unwrap_or(0..book.k))?;
    opts.create_out(None)?;
    crate::io::write_atomic(&opts.path("sweep.csv"), sweep_csv(&rows).as_bytes())?;
    opts.write_stage("sweep")?;
    Ok(rows)
}

fn speakers_of(dirs: &[PathBuf]) -> Result<BTreeMap<String, String>> {
    Ok(read_corpora(dirs)?
        .into_values()
        .map(|u| (u.id, u.speaker))
        .collect())
}

/// Trains on a label file; speakers come from the matching feature files.
pub fn cmd_train_predictor(
    opts: &RunOptions,
    labels: Option<&Path>,
    features: &[PathBuf],
) -> Result<Vec<crate::predictor::EpochStats>> {
    if labels.is_none() {
        opts.require_stage_k("labels")?;
    }
    let labels = read_labels(labels.map_or_else(|| opts.path("labels.csv"), Path::to_path_buf))?;
    let dirs = if features.is_empty() {
        vec![default_features(opts)]
    } else {
        features.to_vec()
    };
    let speakers = speakers_of(&dirs)?;
    let data = labels
        .into_iter()
        .map(|l| {
            let speaker = speakers
                .get(&l.utterance_id)
                .ok_or_else(|| Error::UnknownUtterance(l.utterance_id.clone()))?
                .clone();
            Ok(TrainingUtterance { speaker, labels: l })
        })
        .collect::<Result<Vec<_>>>()?;
    let k = opts.config.clustering.k;
    let model = model_for(&data, k, opts.config.predictor, opts.seed)?;
    let (model, trace) = train(model, &data, opts.seed)?;
    opts.create_out(None)?;
    write_checkpoint(opts.path("predictor.json"), &model)?;
    crate::io::write_atomic(&opts.path("loss_trace.csv"), loss_trace_csv(&trace).as_bytes())?;
    opts.write_stage("train-predictor")?;
    Ok(trace)
}

/// Predicts tokens for the phone sequences of every manifest entry.
pub fn cmd_predict(opts: &RunOptions, model: Option<&Path>) -> Result<Vec<LabelSequence>> {
    let entries = opts.manifest("predict")?;
    let model = read_checkpoint(model.map_or_else(|| opts.path("predictor.json"), Path::to_path_buf))?;
    opts.require_k("predictor checkpoint", model.k)?;
    let results: Vec<(String, Result<LabelSequence>)> = opts.pool()?.install(|| {
        entries
            .par_iter()
            .map(|e| {
                let r = parse_alignment(&e.align_path).and_then(|segs| {
                    let phones: Vec<&str> = segs.iter().filter(|s| s.is_phone()).map(|s| s.label.as_str()).collect();
                    predict_labels(&model, &e.utterance_id, &phones, &e.speaker_id, None)
                });
                (e.utterance_id.clone(), r)
            })
            .collect()
    });
    let mut out = Vec::new();
    let mut failures = Vec::new();
    for (id, r) in results {
        match r {
            Ok(l) => out.push(l),
            Err(e) => failures.push((id, e)),
        }
    }
    batch_result(failures)?;
    opts.create_out(None)?;
    write_labels(opts.path("predicted_labels.csv"), &out)?;
    opts.write_stage("predict")?;
    Ok(out)
}

#[derive(Debug, Clone, Default)]
pub struct EvaluateOptions {
    pub predicted: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub random_labels: Option<u64>,
    pub ref_audio: Option<PathBuf>,
    pub test_audio: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub label_rows: Vec<(String, LabelScores)>,
    pub audio: Option<Vec<crate::metrics::MetricReport>>,
}

pub fn label_report_csv(rows: &[(String, LabelScores)]) -> String {
    let mut out = String::from("system,positions,accuracy_f0,accuracy_dur,mae_f0,mae_dur,accuracy,mae\n");
    for (name, s) in rows {
        writeln!(
            out,
            "{name},{},{},{},{},{},{},{}",
            s.positions,
            s.accuracy_f0,
            s.accuracy_dur,
            s.mae_f0,
            s.mae_dur,
            s.accuracy(),
            s.mae()
        )
        .unwrap();
    }
    out
}

fn wav_ids(dir: &Path) -> Result<Vec<String>> {
    let mut ids = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|x| x == "wav") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                ids.push(stem.to_string());
            }
        }
    }
    ids.sort();
    Ok(ids)
}

/// Label accuracy and token error of predicted (and optionally random)
/// labels against the reference labels, plus audio metrics for every
/// `<id>.wav` present in both audio directories.
pub fn cmd_evaluate(opts: &RunOptions, e: &EvaluateOptions) -> Result<Evaluation> {
    if e.labels.is_none() {
        opts.require_stage_k("labels")?;
    }
    if e.predicted.is_none() {
        opts.require_stage_k("predict")?;
    }
    let truth = read_labels(e.labels.clone().unwrap_or_else(|| opts.path("labels.csv")))?;
    let predicted = read_labels(e.predicted.clone().unwrap_or_else(|| opts.path("predicted_labels.csv")))?;
    let k = opts.config.clustering.k;
    if let Some(t) = truth
        .iter()
        .chain(&predicted)
        .flat_map(|l| l.f0_tokens.iter().chain(&l.dur_tokens))
        .find(|&&t| t >= k)
    {
        return Err(Error::StageMismatch(format!("token {t} in label files is not below k = {k}")));
    }
    let mut rows = vec![("predictor".to_string(), score_labels(&predicted, &truth)?)];
    if let Some(seed) = e.random_labels {
        rows.push(("random".to_string(), score_labels(&random_labels(&predicted, k, seed), &truth)?));
    }
    opts.create_out(None)?;
    crate::io::write_atomic(&opts.path("label_report.csv"), label_report_csv(&rows).as_bytes())?;

    let audio = match (&e.ref_audio, &e.test_audio) {
        (Some(r), Some(t)) => {
            let test_ids: BTreeSet<String> = wav_ids(t)?.into_iter().collect();
            let ids: Vec<String> = wav_ids(r)?.into_iter().filter(|id| test_ids.contains(id)).collect();
            if ids.is_empty() {
                return Err(Error::Empty("audio pairs to compare"));
            }
            let results: Vec<(String, Result<crate::metrics::MetricReport>)> = opts.pool()?.install(|| {
                ids.par_iter()
                    .map(|id| {
                        let r = read_wav(r.join(format!("{id}.wav"))).and_then(|ra| {
                            let ta = read_wav(t.join(format!("{id}.wav")))?;
                            compare_audio(id, &ra, &ta, &opts.config.pitch, &opts.config.metrics)
                        });
                        (id.clone(), r)
                    })
                    .collect()
            });
            let mut reports = Vec::new();
            let mut failures = Vec::new();
            for (id, r) in results {
                match r {
                    Ok(rep) => reports.push(rep),
                    Err(err) => failures.push((id, err)),
                }
            }
            batch_result(failures)?;
            crate::io::write_atomic(&opts.path("report.csv"), report_csv(&reports).as_bytes())?;
            Some(reports)
        }
        (None, None) => None,
        _ => {
            return Err(Error::InvalidConfig(
                "audio evaluation needs both --ref-audio and --test-audio".into(),
            ))
        }
    };
    opts.write_stage("evaluate")?;
    Ok(Evaluation {
        label_rows: rows,
        audio,
    })
}
