//! Forced-alignment files and phoneme-level aggregation of pitch and duration.
//!
//! Alignments are tab-separated, one segment per line:
//!
//! ```text
//! # start  end     label  kind
//! 0.00     0.12    AH     phone
//! 0.12     0.12    _      word_boundary
//! 0.12     0.30    sil    pause
//! ```
//!
//! `kind` is one of `phone`, `word_boundary`, `pause`, `punctuation`. Lines
//! starting with `#` are comments. Only `phone` segments carry prosodic
//! features; the other kinds may be zero-length.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pitch::{F0Domain, PitchTrack};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentKind {
    Phone,
    WordBoundary,
    Pause,
    Punctuation,
}

impl SegmentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SegmentKind::Phone => "phone",
            SegmentKind::WordBoundary => "word_boundary",
            SegmentKind::Pause => "pause",
            SegmentKind::Punctuation => "punctuation",
        }
    }
}

impl fmt::Display for SegmentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SegmentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "phone" => Ok(SegmentKind::Phone),
            "word_boundary" => Ok(SegmentKind::WordBoundary),
            "pause" => Ok(SegmentKind::Pause),
            "punctuation" => Ok(SegmentKind::Punctuation),
            other => Err(format!("unknown segment kind {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhonemeSegment {
    pub start: f64,
    pub end: f64,
    pub label: String,
    pub kind: SegmentKind,
}

impl PhonemeSegment {
    pub fn new(start: f64, end: f64, label: impl Into<String>, kind: SegmentKind) -> Self {
        Self {
            start,
            end,
            label: label.into(),
            kind,
        }
    }

    pub fn duration(&self) -> f64 {
        self.end - self.start
    }

    pub fn is_phone(&self) -> bool {
        self.kind == SegmentKind::Phone
    }
}

/// Phoneme-level prosodic features: mean log-F0 and duration in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhonemeProsody {
    pub label: String,
    pub mean_log_f0: f64,
    pub duration: f64,
}

pub fn parse_alignment(path: impl AsRef<Path>) -> Result<Vec<PhonemeSegment>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_alignment_str(&text, path)
}

/// Parses alignment text; `origin` only labels error messages.
pub fn parse_alignment_str(text: &str, origin: &Path) -> Result<Vec<PhonemeSegment>> {
    let err = |line: usize, message: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        message,
    };
    let mut segments = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 4 {
            return Err(err(
                n + 1,
                format!("expected 4 tab-separated fields, got {}", cols.len()),
            ));
        }
        let time = |s: &str| {
            s.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| err(n + 1, format!("bad time {s:?}")))
        };
        let (start, end) = (time(cols[0])?, time(cols[1])?);
        let label = cols[2].trim();
        if label.is_empty() {
            return Err(err(n + 1, "empty label".into()));
        }
        let kind: SegmentKind = cols[3].trim().parse().map_err(|m| err(n + 1, m))?;
        if start < 0.0 {
            return Err(err(n + 1, format!("negative start {start}")));
        }
        let ordered = match kind {
            SegmentKind::Phone => end > start,
            _ => end >= start,
        };
        if !ordered {
            return Err(err(n + 1, format!("end {end} not after start {start}")));
        }
        segments.push(PhonemeSegment::new(start, end, label, kind));
    }
    sort_and_validate(segments)
}

/// Sorts by `(start, end)` and rejects overlapping segments.
pub fn sort_and_validate(mut segments: Vec<PhonemeSegment>) -> Result<Vec<PhonemeSegment>> {
    segments.sort_by(|a, b| a.start.total_cmp(&b.start).then(a.end.total_cmp(&b.end)));
    for pair in segments.windows(2) {
        if pair[1].start < pair[0].end {
            return Err(Error::Overlap {
                prev_start: pair[0].start,
                prev_end: pair[0].end,
                start: pair[1].start,
                end: pair[1].end,
            });
        }
    }
    Ok(segments)
}

pub fn write_alignment(segments: &[PhonemeSegment]) -> String {
    let mut out = String::from("# start\tend\tlabel\tkind\n");
    for s in segments {
        out.push_str(&format!("{}\t{}\t{}\t{}\n", s.start, s.end, s.label, s.kind));
    }
    out
}

/// Mean log-F0 of each phone segment over the frames whose centre lies in
/// `[start, end)`. A phone containing no frame centre takes the frame nearest
/// its midpoint.
pub fn aggregate_phoneme_f0(track: &PitchTrack, segments: &[PhonemeSegment]) -> Result<Vec<f64>> {
    if track.domain != F0Domain::LogHz {
        return Err(Error::WrongDomain { expected: "log_hz" });
    }
    let Some(last) = segments.iter().map(|s| s.end).reduce(f64::max) else {
        return Ok(Vec::new());
    };
    if track.is_empty() {
        return Err(Error::TrackTooShort {
            track_end: 0.0,
            align_end: last,
        });
    }
    // One hop of slack: framing drops a partial tail shorter than a hop.
    if last > track.end_time() + track.frame_hop + 1e-9 {
        return Err(Error::TrackTooShort {
            track_end: track.end_time(),
            align_end: last,
        });
    }

    let n = track.len();
    let hop = track.frame_hop;
    let nearest = |t: f64| {
        let i = ((t - track.first_center) / hop).round();
        (i.max(0.0) as usize).min(n - 1)
    };
    Ok(segments
        .iter()
        .filter(|s| s.is_phone())
        .map(|seg| {
            let first = ((seg.start - track.first_center) / hop).floor().max(0.0) as usize;
            let mut sum = 0.0;
            let mut count = 0usize;
            for i in first..n {
                let c = track.center(i);
                if c >= seg.end {
                    break;
                }
                if c >= seg.start {
                    sum += track.f0[i];
                    count += 1;
                }
            }
            if count > 0 {
                sum / count as f64
            } else {
                track.f0[nearest(0.5 * (seg.start + seg.end))]
            }
        })
        .collect())
}

/// Durations of phone segments, in order; other kinds contribute nothing.
pub fn extract_durations(segments: &[PhonemeSegment]) -> Vec<f64> {
    segments
        .iter()
        .filter(|s| s.is_phone())
        .map(PhonemeSegment::duration)
        .collect()
}

/// Per-phone prosodic records for one utterance.
pub fn phoneme_prosody(track: &PitchTrack, segments: &[PhonemeSegment]) -> Result<Vec<PhonemeProsody>> {
    let f0 = aggregate_phoneme_f0(track, segments)?;
    Ok(segments
        .iter()
        .filter(|s| s.is_phone())
        .zip(f0)
        .map(|(s, mean_log_f0)| PhonemeProsody {
            label: s.label.clone(),
            mean_log_f0,
            duration: s.duration(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Vec<PhonemeSegment>> {
        parse_alignment_str(text, Path::new("test.tsv"))
    }

    fn log_track(values: Vec<f64>) -> PitchTrack {
        PitchTrack {
            voiced: vec![true; values.len()],
            f0: values,
            frame_hop: 0.01,
            first_center: 0.005,
            domain: F0Domain::LogHz,
        }
    }

    #[test]
    fn parses_a_line() {
        let segs = parse("0.00\t0.12\tAH\tphone\n").unwrap();
        assert_eq!(segs, vec![PhonemeSegment::new(0.0, 0.12, "AH", SegmentKind::Phone)]);
    }

    #[test]
    fn comments_blank_lines_and_empty_files() {
        assert!(parse("").unwrap().is_empty());
        let segs = parse("# header\n\n0\t0.1\tA\tphone\n# trailing\n").unwrap();
        assert_eq!(segs.len(), 1);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            parse("0\t0.1\tA\tphone\n0.05\t0.2\tB\tphone\n"),
            Err(Error::Overlap { .. })
        ));
        assert!(matches!(parse("0.2\t0.1\tA\tphone\n"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse("0.1\t0.1\tA\tphone\n"), Err(Error::Parse { .. })));
        assert!(matches!(parse("0\t0.1\tA\tvowel\n"), Err(Error::Parse { .. })));
        assert!(matches!(parse("0 0.1 A phone\n"), Err(Error::Parse { .. })));
        assert!(matches!(parse("x\t0.1\tA\tphone\n"), Err(Error::Parse { .. })));
    }

    #[test]
    fn sorts_and_allows_zero_length_boundaries() {
        let segs = parse("0.1\t0.2\tB\tphone\n0.1\t0.1\t_\tword_boundary\n0\t0.1\tA\tphone\n").unwrap();
        let labels: Vec<&str> = segs.iter().map(|s| s.label.as_str()).collect();
        assert_eq!(labels, ["A", "_", "B"]);
    }

    #[test]
    fn aggregation_cases() {
        let track = log_track(vec![4.0; 10]);
        let segs = vec![PhonemeSegment::new(0.0, 0.1, "A", SegmentKind::Phone)];
        assert_eq!(aggregate_phoneme_f0(&track, &segs).unwrap(), vec![4.0]);

        // centres at 0.005, 0.015, 0.025, ...
        let track = log_track(vec![3.0, 4.0, 5.0, 6.0]);
        let segs = vec![PhonemeSegment::new(0.01, 0.03, "A", SegmentKind::Phone)];
        assert_eq!(aggregate_phoneme_f0(&track, &segs).unwrap(), vec![4.5]);

        let segs = vec![PhonemeSegment::new(0.016, 0.018, "A", SegmentKind::Phone)];
        assert_eq!(aggregate_phoneme_f0(&track, &segs).unwrap(), vec![4.0]);
    }

    #[test]
    fn aggregation_guards() {
        let track = log_track(vec![4.0; 5]);
        let segs = vec![PhonemeSegment::new(0.0, 0.5, "A", SegmentKind::Phone)];
        assert!(matches!(
            aggregate_phoneme_f0(&track, &segs),
            Err(Error::TrackTooShort { .. })
        ));
        let mut lin = track.clone();
        lin.domain = F0Domain::LinearHz;
        assert!(matches!(
            aggregate_phoneme_f0(&lin, &segs),
            Err(Error::WrongDomain { .. })
        ));
    }

    #[test]
    fn durations_exclude_non_phones() {
        let segs = vec![
            PhonemeSegment::new(0.0, 0.1, "A", SegmentKind::Phone),
            PhonemeSegment::new(0.1, 0.25, "B", SegmentKind::Phone),
        ];
        let d = extract_durations(&segs);
        assert!((d[0] - 0.1).abs() < 1e-12 && (d[1] - 0.15).abs() < 1e-12);

        let pauses = vec![
            PhonemeSegment::new(0.0, 0.1, "sil", SegmentKind::Pause),
            PhonemeSegment::new(0.1, 0.2, "sil", SegmentKind::Pause),
        ];
        assert!(extract_durations(&pauses).is_empty());

        let mixed = vec![
            PhonemeSegment::new(0.0, 0.1, "A", SegmentKind::Phone),
            PhonemeSegment::new(0.1, 0.2, "sil", SegmentKind::Pause),
            PhonemeSegment::new(0.2, 0.3, "B", SegmentKind::Phone),
        ];
        assert_eq!(extract_durations(&mixed).len(), 2);
    }

    #[test]
    fn records_only_for_phones() {
        let track = log_track((0..40).map(|i| 4.0 + i as f64 * 0.01).collect());
        let segs = vec![
            PhonemeSegment::new(0.0, 0.1, "A", SegmentKind::Phone),
            PhonemeSegment::new(0.1, 0.1, "_", SegmentKind::WordBoundary),
            PhonemeSegment::new(0.1, 0.15, "sil", SegmentKind::Pause),
            PhonemeSegment::new(0.15, 0.3, "B", SegmentKind::Phone),
            PhonemeSegment::new(0.3, 0.35, ",", SegmentKind::Punctuation),
        ];
        let recs = phoneme_prosody(&track, &segs).unwrap();
        assert_eq!(recs.len(), 2);
        assert!(recs.len() < segs.len());
        assert_eq!(recs[1].label, "B");
    }

    proptest::proptest! {
        #[test]
        fn aggregation_is_independent_of_file_order(
            seed in 0u64..1000,
            n in 1usize..12
        ) {
            use rand::{seq::SliceRandom, Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut t = 0.0;
            let mut segs = Vec::new();
            for i in 0..n {
                let d: f64 = rng.gen_range(0.002..0.2);
                let kind = if i % 3 == 2 { SegmentKind::Pause } else { SegmentKind::Phone };
                segs.push(PhonemeSegment::new(t, t + d, format!("P{i}"), kind));
                t += d;
            }
            let track = log_track((0..(t / 0.01) as usize + 2).map(|_| rng.gen_range(4.0..6.0)).collect());
            let text = write_alignment(&segs);
            let mut lines: Vec<&str> = text.lines().skip(1).collect();
            lines.shuffle(&mut rng);
            let shuffled = parse(&lines.join("\n")).unwrap();
            let a = phoneme_prosody(&track, &parse(&text).unwrap()).unwrap();
            let b = phoneme_prosody(&track, &shuffled).unwrap();
            proptest::prop_assert_eq!(a, b);
        }
    }
}
