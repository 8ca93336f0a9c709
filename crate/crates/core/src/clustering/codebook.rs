use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::kmeans::{kmeans_1d, KMeansConfig};
use super::{compute_speaker_stats, SpeakerStats};
use crate::error::{Error, Result};
use crate::features::{f0_by_speaker, Corpus};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusteringConfig {
    /// Number of F0 clusters and of duration intervals per phoneme.
    pub k: usize,
    pub restarts: usize,
    pub max_iter: usize,
    pub tol: f64,
    /// z-score durations per speaker before interval construction.
    pub duration_z_score: bool,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        Self {
            k: 15,
            restarts: 10,
            max_iter: 300,
            tol: 1e-10,
            duration_z_score: false,
        }
    }
}

impl ClusteringConfig {
    pub fn kmeans(&self, seed: u64) -> KMeansConfig {
        KMeansConfig {
            k: self.k,
            restarts: self.restarts,
            max_iter: self.max_iter,
            tol: self.tol,
            seed,
        }
    }
}

/// `k` equal-count duration intervals of one phoneme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DurationIntervals {
    /// `k - 1` non-decreasing interval boundaries.
    pub boundaries: Vec<f64>,
    /// `k` interval medians.
    pub representatives: Vec<f64>,
}

/// Sorts the values and splits them into `k` contiguous groups whose sizes
/// differ by at most one, larger groups first. Boundaries sit halfway
/// between neighbouring groups; representatives are group medians.
pub fn balanced_duration_clusters(durations: &[f64], k: usize) -> Result<DurationIntervals> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    if durations.len() < k {
        return Err(Error::TooFewValues {
            needed: k,
            got: durations.len(),
        });
    }
    let mut sorted = durations.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (base, extra) = (sorted.len() / k, sorted.len() % k);
    let mut groups = Vec::with_capacity(k);
    let mut start = 0;
    for g in 0..k {
        let size = base + usize::from(g < extra);
        groups.push(&sorted[start..start + size]);
        start += size;
    }
    let boundaries = groups
        .windows(2)
        .map(|w| 0.5 * (w[0][w[0].len() - 1] + w[1][0]))
        .collect();
    let representatives = groups.iter().map(|g| median(g)).collect();
    Ok(DurationIntervals {
        boundaries,
        representatives,
    })
}

/// Interval layout for phonemes with fewer than `k` samples: boundaries and
/// representatives are linear-interpolated quantiles of the available values.
pub fn quantile_duration_intervals(durations: &[f64], k: usize) -> Result<DurationIntervals> {
    if durations.is_empty() {
        return Err(Error::Empty("duration samples"));
    }
    let mut sorted = durations.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let pos = p * (sorted.len() - 1) as f64;
        let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
        sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
    };
    Ok(DurationIntervals {
        boundaries: (1..k).map(|j| q(j as f64 / k as f64)).collect(),
        representatives: (0..k).map(|j| q((j as f64 + 0.5) / k as f64)).collect(),
    })
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// F0 centroids (z-score space), per-phoneme duration intervals, and the
/// per-speaker statistics used to map raw values into the codebook.
#[derive(Debug, Clone, PartialEq)]
pub struct ProsodyCodebook {
    pub k: usize,
    pub f0_centroids: Vec<f64>,
    pub durations: BTreeMap<String, DurationIntervals>,
    pub speakers: BTreeMap<String, SpeakerStats>,
    /// Whether duration intervals live in per-speaker z-score space.
    pub duration_normalized: bool,
    /// Per-speaker duration moments, present when `duration_normalized`.
    pub duration_speakers: BTreeMap<String, SpeakerStats>,
    pub config_hash: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpeakerEntry {
    mu: f64,
    sigma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    duration_mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    duration_sigma: Option<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CodebookFile {
    k: usize,
    f0_centroids: Vec<f64>,
    durations: BTreeMap<String, DurationIntervals>,
    speakers: BTreeMap<String, SpeakerEntry>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    duration_normalized: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config_hash: Option<String>,
}

impl ProsodyCodebook {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(format!("codebook: {m}")));
        if self.f0_centroids.len() != self.k {
            return bad(format!("{} centroids for k = {}", self.f0_centroids.len(), self.k));
        }
        if !self.f0_centroids.windows(2).all(|w| w[0] < w[1]) {
            return bad("centroids are not strictly ascending".into());
        }
        for (ph, iv) in &self.durations {
            if iv.boundaries.len() + 1 != self.k || iv.representatives.len() != self.k {
                return bad(format!("phoneme {ph:?} does not have k intervals"));
            }
            if !iv.boundaries.windows(2).all(|w| w[0] <= w[1]) {
                return bad(format!("phoneme {ph:?} boundaries decrease"));
            }
        }
        for s in self.speakers.values() {
            if !(s.sigma > 0.0 && s.mu.is_finite()) {
                return bad(format!("speaker {:?} has invalid stats", s.speaker_id));
            }
        }
        Ok(())
    }

    pub fn decode_f0(&self, token: usize) -> Option<f64> {
        self.f0_centroids.get(token).copied()
    }

    pub fn decode_duration(&self, token: usize, phoneme: &str) -> Option<f64> {
        self.durations
            .get(phoneme)
            .and_then(|iv| iv.representatives.get(token))
            .copied()
    }

    /// Inserts or replaces a speaker's stats. Centroids and intervals are untouched.
    pub fn insert_speaker(&mut self, stats: SpeakerStats) {
        self.speakers.insert(stats.speaker_id.clone(), stats);
    }

    /// Maps a raw duration into the space the intervals were built in.
    pub(crate) fn duration_feature(&self, duration: f64, speaker: &SpeakerStats) -> f64 {
        if !self.duration_normalized {
            return duration;
        }
        match self.duration_speakers.get(&speaker.speaker_id) {
            Some(d) => (duration - d.mu) / d.sigma,
            None => duration,
        }
    }

    /// Hash over the centroids and duration intervals only.
    pub fn content_hash(&self) -> String {
        let body = serde_json::to_vec(&(&self.k, &self.f0_centroids, &self.durations))
            .expect("codebook content serializes");
        hex::encode(Sha256::digest(body))
    }

    pub fn to_json(&self) -> String {
        let mut speakers: BTreeMap<String, SpeakerEntry> = BTreeMap::new();
        for (id, s) in &self.speakers {
            let dur = self.duration_speakers.get(id);
            speakers.insert(
                id.clone(),
                SpeakerEntry {
                    mu: s.mu,
                    sigma: s.sigma,
                    duration_mu: dur.map(|d| d.mu),
                    duration_sigma: dur.map(|d| d.sigma),
                },
            );
        }
        let file = CodebookFile {
            k: self.k,
            f0_centroids: self.f0_centroids.clone(),
            durations: self.durations.clone(),
            speakers,
            duration_normalized: self.duration_normalized,
            config_hash: self.config_hash.clone(),
        };
        let mut s = serde_json::to_string_pretty(&file).expect("codebook serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str, origin: &Path) -> Result<Self> {
        let file: CodebookFile = serde_json::from_str(text).map_err(|source| Error::Json {
            path: origin.to_path_buf(),
            source,
        })?;
        let mut speakers = BTreeMap::new();
        let mut duration_speakers = BTreeMap::new();
        for (id, e) in file.speakers {
            if let (Some(mu), Some(sigma)) = (e.duration_mu, e.duration_sigma) {
                duration_speakers.insert(
                    id.clone(),
                    SpeakerStats {
                        speaker_id: id.clone(),
                        mu,
                        sigma,
                    },
                );
            }
            speakers.insert(
                id.clone(),
                SpeakerStats {
                    speaker_id: id,
                    mu: e.mu,
                    sigma: e.sigma,
                },
            );
        }
        let book = Self {
            k: file.k,
            f0_centroids: file.f0_centroids,
            durations: file.durations,
            speakers,
            duration_normalized: file.duration_normalized,
            duration_speakers,
            config_hash: file.config_hash,
        };
        book.validate()?;
        Ok(book)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::io::write_atomic(path.as_ref(), self.to_json().as_bytes())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path)
    }

    /// Stats for a new speaker, including duration moments when the codebook
    /// normalizes durations. Centroids and intervals are not touched.
    pub fn adapt(&mut self, speaker_id: &str, f0: &[f64], durations: &[f64]) -> Result<()> {
        let stats = super::adapt_speaker(speaker_id, f0, self)?;
        if self.duration_normalized {
            let d = compute_speaker_stats(speaker_id, durations)?;
            self.duration_speakers.insert(speaker_id.to_string(), d);
        }
        self.insert_speaker(stats);
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CodebookWarning {
    /// A phoneme had fewer than `k` duration samples; its intervals are quantiles.
    SparsePhoneme { phoneme: String, samples: usize },
}

/// Trains the codebook on a corpus: per-speaker stats, pooled K-Means on
/// normalized F0, balanced per-phoneme duration intervals.
pub fn train_codebook(
    corpus: &Corpus,
    cfg: &ClusteringConfig,
    seed: u64,
) -> Result<(ProsodyCodebook, Vec<CodebookWarning>)> {
    if corpus.is_empty() {
        return Err(Error::Empty("corpus"));
    }
    let mut speakers = BTreeMap::new();
    for (id, values) in f0_by_speaker(corpus) {
        speakers.insert(id.clone(), compute_speaker_stats(&id, &values)?);
    }

    let mut duration_speakers: BTreeMap<String, SpeakerStats> = BTreeMap::new();
    if cfg.duration_z_score {
        let mut by_speaker: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        for utt in corpus.values() {
            by_speaker
                .entry(&utt.speaker)
                .or_default()
                .extend(utt.phones.iter().map(|p| p.duration));
        }
        for (id, d) in by_speaker {
            duration_speakers.insert(id.to_string(), compute_speaker_stats(id, &d)?);
        }
    }

    let mut pooled = Vec::new();
    let mut per_phone: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for utt in corpus.values() {
        let stats = &speakers[&utt.speaker];
        for p in &utt.phones {
            pooled.push(stats.normalize(p.mean_log_f0));
            let d = match duration_speakers.get(&utt.speaker) {
                Some(s) => (p.duration - s.mu) / s.sigma,
                None => p.duration,
            };
            per_phone.entry(p.label.clone()).or_default().push(d);
        }
    }

    let fit = kmeans_1d(&pooled, &cfg.kmeans(seed))?;
    let mut warnings = Vec::new();
    let mut durations = BTreeMap::new();
    for (phoneme, values) in per_phone {
        let intervals = if values.len() >= cfg.k {
            balanced_duration_clusters(&values, cfg.k)?
        } else {
            log::warn!(
                "phoneme {phoneme:?} has {} duration samples (< k = {}); using quantile intervals",
                values.len(),
                cfg.k
            );
            warnings.push(CodebookWarning::SparsePhoneme {
                phoneme: phoneme.clone(),
                samples: values.len(),
            });
            quantile_duration_intervals(&values, cfg.k)?
        };
        durations.insert(phoneme, intervals);
    }

    let book = ProsodyCodebook {
        k: cfg.k,
        f0_centroids: fit.centroids,
        durations,
        speakers,
        duration_normalized: cfg.duration_z_score,
        duration_speakers,
        config_hash: None,
    };
    book.validate()?;
    Ok((book, warnings))
}
