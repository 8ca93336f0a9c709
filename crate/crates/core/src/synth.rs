//! Synthetic voices: harmonic waveforms with matching alignment files.
//!
//! Every phone in the inventory has an intrinsic pitch offset and length, so
//! corpora generated here carry learnable prosodic structure.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::alignment::{write_alignment, PhonemeSegment, SegmentKind};
use crate::error::Result;
use crate::signal::{write_wav, AudioBuffer};

pub const SAMPLE_RATE: u32 = 16_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhoneSpec {
    pub label: &'static str,
    pub voiced: bool,
    /// Semitones relative to the speaker's base pitch, before range scaling.
    pub pitch_offset: f64,
    /// Seconds at tempo 1.
    pub duration: f64,
}

const fn phone(label: &'static str, voiced: bool, pitch_offset: f64, duration: f64) -> PhoneSpec {
    PhoneSpec {
        label,
        voiced,
        pitch_offset,
        duration,
    }
}

pub const INVENTORY: [PhoneSpec; 13] = [
    phone("AA", true, 3.0, 0.120),
    phone("EH", true, 1.5, 0.095),
    phone("IY", true, 4.5, 0.105),
    phone("OW", true, -1.0, 0.130),
    phone("UW", true, -2.5, 0.110),
    phone("M", true, -3.5, 0.070),
    phone("N", true, -2.0, 0.060),
    phone("L", true, 0.5, 0.065),
    phone("R", true, -0.5, 0.075),
    phone("S", false, 0.0, 0.100),
    phone("F", false, 0.0, 0.085),
    phone("K", false, 0.0, 0.055),
    phone("T", false, 0.0, 0.050),
];

#[derive(Debug, Clone, PartialEq)]
pub struct Voice {
    pub speaker_id: String,
    pub base_f0: f64,
    /// Multiplier on every pitch excursion, in semitones per semitone.
    pub pitch_range: f64,
    /// Speaking rate; 1.2 speaks 20% faster.
    pub tempo: f64,
}

impl Voice {
    pub fn new(speaker_id: &str, base_f0: f64, pitch_range: f64, tempo: f64) -> Self {
        Self {
            speaker_id: speaker_id.to_string(),
            base_f0,
            pitch_range,
            tempo,
        }
    }
}

/// Three contrasting training voices.
pub fn default_voices() -> Vec<Voice> {
    vec![
        Voice::new("spk_low", 105.0, 1.0, 0.95),
        Voice::new("spk_mid", 150.0, 1.2, 1.0),
        Voice::new("spk_high", 215.0, 0.9, 1.1),
    ]
}

/// A voice outside the training set, for adaptation.
pub fn unseen_voice() -> Voice {
    Voice::new("spk_new", 250.0, 1.4, 0.9)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticUtterance {
    pub id: String,
    pub speaker: String,
    pub audio: AudioBuffer,
    pub segments: Vec<PhonemeSegment>,
}

struct Piece {
    samples: usize,
    kind: SegmentKind,
    label: &'static str,
    voiced: bool,
    target_semitones: f64,
}

/// One utterance of `words` words of two to four phones each, framed by
/// pauses and closed by a punctuation mark.
pub fn synthesize(voice: &Voice, id: &str, words: usize, seed: u64) -> SyntheticUtterance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rate = SAMPLE_RATE as f64;
    let secs = |s: f64| (s * rate).round() as usize;
    let mut pieces = vec![Piece {
        samples: secs(rng.gen_range(0.10..0.15)),
        kind: SegmentKind::Pause,
        label: "sil",
        voiced: false,
        target_semitones: 0.0,
    }];
    let total_phones: usize = words * 3;
    let mut index = 0usize;
    for w in 0..words {
        if w > 0 {
            pieces.push(Piece {
                samples: 0,
                kind: SegmentKind::WordBoundary,
                label: "_",
                voiced: false,
                target_semitones: 0.0,
            });
            if rng.gen_bool(0.25) {
                pieces.push(Piece {
                    samples: secs(rng.gen_range(0.05..0.09)),
                    kind: SegmentKind::Pause,
                    label: "sp",
                    voiced: false,
                    target_semitones: 0.0,
                });
            }
        }
        for _ in 0..rng.gen_range(2..=4) {
            let spec = INVENTORY[rng.gen_range(0..INVENTORY.len())];
            let progress = index as f64 / total_phones.max(1) as f64;
            let declination = 1.0 - 2.5 * progress;
            let jitter = rng.gen_range(-1.2..1.2);
            let stretch = rng.gen_range(0.75..1.35);
            pieces.push(Piece {
                samples: secs(spec.duration * stretch / voice.tempo).max(secs(0.03)),
                kind: SegmentKind::Phone,
                label: spec.label,
                voiced: spec.voiced,
                target_semitones: voice.pitch_range * (spec.pitch_offset + declination + jitter),
            });
            index += 1;
        }
    }
    pieces.push(Piece {
        samples: 0,
        kind: SegmentKind::Punctuation,
        label: ".",
        voiced: false,
        target_semitones: 0.0,
    });
    pieces.push(Piece {
        samples: secs(rng.gen_range(0.10..0.15)),
        kind: SegmentKind::Pause,
        label: "sil",
        voiced: false,
        target_semitones: 0.0,
    });

    let mut samples = Vec::new();
    let mut segments = Vec::new();
    let mut phase = 0.0;
    let mut semis = pieces
        .iter()
        .find(|p| p.voiced)
        .map_or(0.0, |p| p.target_semitones);
    // one-pole glide between phone targets, about 15 ms
    let glide = 1.0 - (-1.0 / (0.015 * rate)).exp();
    for p in &pieces {
        let start = samples.len();
        for _ in 0..p.samples {
            let value = if p.voiced {
                semis += glide * (p.target_semitones - semis);
                let f0 = voice.base_f0 * 2f64.powf(semis / 12.0);
                phase = (phase + 2.0 * PI * f0 / rate) % (2.0 * PI);
                let harmonics = (1..=8)
                    .filter(|&h| h as f64 * f0 < rate / 2.0)
                    .map(|h| (h as f64 * phase).sin() / h as f64)
                    .sum::<f64>();
                0.25 * harmonics + rng.gen_range(-0.002..0.002)
            } else if p.kind == SegmentKind::Phone {
                rng.gen_range(-0.04..0.04)
            } else {
                0.0
            };
            samples.push(value);
        }
        segments.push(PhonemeSegment::new(
            start as f64 / rate,
            samples.len() as f64 / rate,
            p.label,
            p.kind,
        ));
    }
    SyntheticUtterance {
        id: id.to_string(),
        speaker: voice.speaker_id.clone(),
        audio: AudioBuffer::new(samples, SAMPLE_RATE),
        segments,
    }
}

/// Writes `wav/<id>.wav`, `align/<id>.tsv` and `manifest.csv` under `dir`,
/// with manifest paths relative to `dir`. Returns the manifest path.
pub fn write_synthetic_corpus(
    dir: impl AsRef<Path>,
    voices: &[Voice],
    utterances_per_voice: usize,
    words: usize,
    seed: u64,
) -> Result<PathBuf> {
    let dir = dir.as_ref();
    for sub in ["wav", "align"] {
        std::fs::create_dir_all(dir.join(sub)).map_err(|e| crate::Error::io(dir.join(sub), e))?;
    }
    let mut manifest = String::from("utterance_id,speaker_id,wav_path,align_path\n");
    for (v, voice) in voices.iter().enumerate() {
        for u in 0..utterances_per_voice {
            let id = format!("{}_{u:03}", voice.speaker_id);
            let utt_seed = seed
                .wrapping_mul(0x9E37_79B9_7F4A_7C15)
                .wrapping_add((v as u64) << 32 | u as u64);
            let utt = synthesize(voice, &id, words, utt_seed);
            let wav = format!("wav/{id}.wav");
            let align = format!("align/{id}.tsv");
            write_wav(dir.join(&wav), &utt.audio)?;
            crate::io::write_atomic(&dir.join(&align), write_alignment(&utt.segments).as_bytes())?;
            writeln!(manifest, "{id},{},{wav},{align}", voice.speaker_id).unwrap();
        }
    }
    let path = dir.join("manifest.csv");
    crate::io::write_atomic(&path, manifest.as_bytes())?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alignment::{parse_alignment_str, phoneme_prosody};
    use crate::pitch::{extract_log_f0, PitchConfig};

    #[test]
    fn deterministic_and_consistent_with_alignment() {
        let v = &default_voices()[1];
        let a = synthesize(v, "x", 4, 9);
        assert_eq!(a, synthesize(v, "x", 4, 9));
        assert_ne!(a.audio, synthesize(v, "x", 4, 10).audio);
        let end = a.segments.last().unwrap().end;
        assert!((end - a.audio.duration()).abs() < 1e-12);
        let parsed = parse_alignment_str(&write_alignment(&a.segments), Path::new("x.tsv")).unwrap();
        assert_eq!(parsed, a.segments);
    }

    #[test]
    fn pitch_follows_the_voice() {
        for v in default_voices() {
            let u = synthesize(&v, "u", 5, 3);
            let (_, log) = extract_log_f0(&u.audio, &PitchConfig::default()).unwrap();
            let records = phoneme_prosody(&log, &u.segments).unwrap();
            let mean = records.iter().map(|r| r.mean_log_f0).sum::<f64>() / records.len() as f64;
            // within 5 semitones of the base pitch
            assert!((mean - v.base_f0.ln()).abs() < 5.0 / 12.0 * 2f64.ln(), "{}", v.speaker_id);
        }
    }
}
