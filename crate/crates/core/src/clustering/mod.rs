//! The universal prosody codebook.
//!
//! F0 values are z-scored per speaker, pooled across speakers and clustered
//! with K-Means; durations are grouped per phoneme into equal-count intervals.
//! Cluster indices are ordinal: token `t + 1` always decodes to a larger value
//! than token `t`.

mod codebook;
pub mod kmeans;
mod labels;

pub use codebook::{
    balanced_duration_clusters, quantile_duration_intervals, train_codebook, ClusteringConfig,
    CodebookWarning, DurationIntervals, ProsodyCodebook,
};
pub use kmeans::{kmeans_1d, KMeansConfig, KMeansFit};
pub use labels::{read_labels, write_labels, LabelSequence};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::Utterance;

/// Mean and population standard deviation of one speaker's log-F0 values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerStats {
    pub speaker_id: String,
    pub mu: f64,
    pub sigma: f64,
}

impl SpeakerStats {
    pub fn normalize(&self, f: f64) -> f64 {
        normalize_f0(f, self)
    }

    pub fn denormalize(&self, z: f64) -> f64 {
        self.mu + self.sigma * z
    }
}

/// Population mean and standard deviation; `(mu, sigma)`.
pub fn moments_of(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mu = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
    (mu, var.sqrt())
}

pub fn compute_speaker_stats(speaker_id: &str, values: &[f64]) -> Result<SpeakerStats> {
    if values.len() < 2 {
        return Err(Error::TooFewValues {
            needed: 2,
            got: values.len(),
        });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("speaker F0 values"));
    }
    let (mu, sigma) = moments_of(values);
    if sigma <= 1e-12 * mu.abs().max(1.0) {
        return Err(Error::DegenerateSpeaker {
            speaker: speaker_id.to_string(),
        });
    }
    Ok(SpeakerStats {
        speaker_id: speaker_id.to_string(),
        mu,
        sigma,
    })
}

/// `(f - mu) / sigma`.
pub fn normalize_f0(f: f64, stats: &SpeakerStats) -> f64 {
    (f - stats.mu) / stats.sigma
}

pub fn assign_f0_label(value: f64, codebook: &ProsodyCodebook) -> usize {
    kmeans::nearest(value, &codebook.f0_centroids)
}

/// Interval index: the number of the phoneme's boundaries strictly below `duration`.
pub fn assign_duration_label(duration: f64, phoneme: &str, codebook: &ProsodyCodebook) -> Result<usize> {
    let intervals = codebook
        .durations
        .get(phoneme)
        .ok_or_else(|| Error::UnknownPhoneme(phoneme.to_string()))?;
    Ok(intervals.boundaries.iter().filter(|&&b| b < duration).count())
}

/// Labels every phone of `utterance` with the codebook, using the stats
/// stored for its speaker.
pub fn build_label_sequence(utterance: &Utterance, codebook: &ProsodyCodebook) -> Result<LabelSequence> {
    let stats = codebook
        .speakers
        .get(&utterance.speaker)
        .ok_or_else(|| Error::UnknownSpeaker(utterance.speaker.clone()))?;
    let mut seq = LabelSequence {
        utterance_id: utterance.id.clone(),
        phones: Vec::with_capacity(utterance.phones.len()),
        f0_tokens: Vec::with_capacity(utterance.phones.len()),
        dur_tokens: Vec::with_capacity(utterance.phones.len()),
    };
    for p in &utterance.phones {
        let z = normalize_f0(p.mean_log_f0, stats);
        let d = codebook.duration_feature(p.duration, stats);
        seq.phones.push(p.label.clone());
        seq.f0_tokens.push(assign_f0_label(z, codebook));
        seq.dur_tokens.push(assign_duration_label(d, &p.label, codebook)?);
    }
    Ok(seq)
}

/// Stats for an unseen speaker. The codebook is only read; store the result
/// with [`ProsodyCodebook::insert_speaker`].
pub fn adapt_speaker(speaker_id: &str, values: &[f64], codebook: &ProsodyCodebook) -> Result<SpeakerStats> {
    debug_assert!(codebook.k > 0);
    compute_speaker_stats(speaker_id, values)
}
