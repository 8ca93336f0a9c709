//! Frame-level F0 estimation by normalized autocorrelation, followed by the
//! post-processing chain used before phoneme aggregation: unvoiced
//! interpolation, median smoothing and the natural-log transform.

use std::io::Write;
use std::path::Path;

use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{frame_signal, AudioBuffer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum F0Domain {
    LinearHz,
    LogHz,
}

/// Per-frame F0 with voicing flags. Frame `i` is centred at
/// `first_center + i * frame_hop` seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct PitchTrack {
    pub f0: Vec<f64>,
    pub voiced: Vec<bool>,
    pub frame_hop: f64,
    pub first_center: f64,
    pub domain: F0Domain,
}

impl PitchTrack {
    pub fn len(&self) -> usize {
        self.f0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f0.is_empty()
    }

    pub fn center(&self, frame: usize) -> f64 {
        self.first_center + frame as f64 * self.frame_hop
    }

    /// Time up to which the track has analysed audio: the end of the last frame.
    pub fn end_time(&self) -> f64 {
        match self.len() {
            0 => 0.0,
            n => self.center(n - 1) + self.first_center,
        }
    }

    pub fn voiced_fraction(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.voiced.iter().filter(|&&v| v).count() as f64 / self.len() as f64
    }

    fn require(&self, domain: F0Domain) -> Result<()> {
        if self.domain != domain {
            return Err(Error::WrongDomain {
                expected: match domain {
                    F0Domain::LinearHz => "linear_hz",
                    F0Domain::LogHz => "log_hz",
                },
            });
        }
        Ok(())
    }

    /// Writes `frame_index,time_sec,f0,voiced` rows. Only linear-Hz tracks are persisted.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.require(F0Domain::LinearHz)?;
        let path = path.as_ref();
        let mut out = Vec::new();
        writeln!(out, "frame_index,time_sec,f0,voiced").unwrap();
        for i in 0..self.len() {
            writeln!(
                out,
                "{},{},{},{}",
                i,
                self.center(i),
                self.f0[i],
                u8::from(self.voiced[i])
            )
            .unwrap();
        }
        crate::io::write_atomic(path, &out)
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let parse_err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut times = Vec::new();
        let mut f0 = Vec::new();
        let mut voiced = Vec::new();
        for (n, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 4 {
                return Err(parse_err(n + 1, format!("expected 4 columns, got {}", cols.len())));
            }
            let num = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| parse_err(n + 1, format!("bad number {s:?}: {e}")))
            };
            times.push(num(cols[1])?);
            f0.push(num(cols[2])?);
            voiced.push(match cols[3].trim() {
                "0" => false,
                "1" => true,
                other => return Err(parse_err(n + 1, format!("voiced must be 0 or 1, got {other:?}"))),
            });
        }
        let first_center = times.first().copied().unwrap_or(0.0);
        let frame_hop = if times.len() > 1 {
            (times[times.len() - 1] - first_center) / (times.len() - 1) as f64
        } else {
            0.0
        };
        Ok(Self {
            f0,
            voiced,
            frame_hop,
            first_center,
            domain: F0Domain::LinearHz,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PitchConfig {
    /// Analysis frame length in seconds.
    pub frame_sec: f64,
    /// Frame hop in seconds.
    pub hop_sec: f64,
    pub f0_min: f64,
    pub f0_max: f64,
    /// Minimum normalized autocorrelation peak for a frame to count as voiced.
    pub voicing_threshold: f64,
    /// Frames with RMS below this are unvoiced regardless of periodicity.
    pub silence_rms: f64,
    /// Per-octave penalty on longer lags when choosing among candidate peaks.
    pub octave_cost: f64,
    /// Median smoother width in frames (odd).
    pub smooth_window: usize,
}

impl Default for PitchConfig {
    fn default() -> Self {
        Self {
            frame_sec: 0.040,
            hop_sec: 0.010,
            f0_min: 60.0,
            f0_max: 500.0,
            voicing_threshold: 0.45,
            silence_rms: 1e-4,
            octave_cost: 0.01,
            smooth_window: 5,
        }
    }
}

impl PitchConfig {
    pub fn frame_samples(&self, rate: u32) -> usize {
        (self.frame_sec * rate as f64).round() as usize
    }

    pub fn hop_samples(&self, rate: u32) -> usize {
        (self.hop_sec * rate as f64).round().max(1.0) as usize
    }

    pub fn validate(&self, rate: u32) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.f0_min > 0.0 && self.f0_min < self.f0_max) {
            return bad(format!(
                "need 0 < f0_min < f0_max, got {} and {}",
                self.f0_min, self.f0_max
            ));
        }
        if self.f0_max >= rate as f64 / 2.0 {
            return bad(format!("f0_max {} must be below Nyquist", self.f0_max));
        }
        let frame = self.frame_samples(rate);
        if rate as f64 / self.f0_min >= frame as f64 {
            return bad(format!(
                "frame of {frame} samples cannot hold a full {} Hz period",
                self.f0_min
            ));
        }
        if self.hop_samples(rate) > frame {
            return bad("hop exceeds frame length".into());
        }
        if !(0.0..=1.0).contains(&self.voicing_threshold) {
            return bad("voicing_threshold must lie in [0, 1]".into());
        }
        if self.smooth_window % 2 == 0 {
            return bad("smooth_window must be odd".into());
        }
        Ok(())
    }
}

/// Autocorrelation pitch estimate per frame. Unvoiced frames carry `f0 = 0`.
pub fn estimate_f0(audio: &AudioBuffer, cfg: &PitchConfig) -> Result<PitchTrack> {
    let rate = audio.sample_rate;
    cfg.validate(rate)?;
    let frame_len = cfg.frame_samples(rate);
    let hop = cfg.hop_samples(rate);
    let frames = frame_signal(&audio.samples, frame_len, hop)?;

    let min_lag = ((rate as f64 / cfg.f0_max).floor() as usize).max(2);
    let max_lag = ((rate as f64 / cfg.f0_min).ceil() as usize).min(frame_len - 2);
    let n_fft = (2 * frame_len).next_power_of_two();
    let mut planner = FftPlanner::new();
    let forward = planner.plan_fft_forward(n_fft);
    let inverse = planner.plan_fft_inverse(n_fft);

    let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
    let mut f0 = Vec::with_capacity(frames.len());
    let mut voiced = Vec::with_capacity(frames.len());
    for frame in frames {
        let mean = frame.iter().sum::<f64>() / frame_len as f64;
        let x: Vec<f64> = frame.iter().map(|v| v - mean).collect();
        let rms = (x.iter().map(|v| v * v).sum::<f64>() / frame_len as f64).sqrt();
        if rms < cfg.silence_rms {
            f0.push(0.0);
            voiced.push(false);
            continue;
        }

        buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
        for (b, &v) in buf.iter_mut().zip(&x) {
            b.re = v;
        }
        forward.process(&mut buf);
        buf.iter_mut()
            .for_each(|c| *c = Complex::new(c.norm_sqr(), 0.0));
        inverse.process(&mut buf);

        // prefix[i] = sum of x[..i]^2; normalize each lag by the energy of the
        // two overlapping segments.
        let mut prefix = vec![0.0; frame_len + 1];
        for (i, v) in x.iter().enumerate() {
            prefix[i + 1] = prefix[i] + v * v;
        }
        let nccf = |lag: usize| {
            let cross = buf[lag].re / n_fft as f64;
            let head = prefix[frame_len - lag];
            let tail = prefix[frame_len] - prefix[lag];
            let denom = (head * tail).sqrt();
            if denom > 0.0 {
                cross / denom
            } else {
                0.0
            }
        };
        let r: Vec<f64> = (min_lag - 1..=max_lag + 1).map(nccf).collect();
        let at = |lag: usize| r[lag + 1 - min_lag];

        let mut best: Option<(f64, f64, f64)> = None;
        for lag in min_lag..=max_lag {
            let (prev, cur, next) = (at(lag - 1), at(lag), at(lag + 1));
            if !(cur >= prev && cur > next) {
                continue;
            }
            let curvature = prev - 2.0 * cur + next;
            let shift = if curvature < 0.0 {
                0.5 * (prev - next) / curvature
            } else {
                0.0
            };
            let score = cur - cfg.octave_cost * (lag as f64 / min_lag as f64).log2();
            if best.map_or(true, |(s, _, _)| score > s) {
                best = Some((score, cur, lag as f64 + shift));
            }
        }
        match best {
            Some((_, strength, lag)) if strength >= cfg.voicing_threshold => {
                f0.push(rate as f64 / lag);
                voiced.push(true);
            }
            _ => {
                f0.push(0.0);
                voiced.push(false);
            }
        }
    }

    Ok(PitchTrack {
        f0,
        voiced,
        frame_hop: hop as f64 / rate as f64,
        first_center: frame_len as f64 / 2.0 / rate as f64,
        domain: F0Domain::LinearHz,
    })
}

/// Fills unvoiced frames: linear interpolation between flanking voiced
/// frames, edge runs held at the nearest voiced value.
pub fn interpolate_unvoiced(track: &PitchTrack) -> Result<PitchTrack> {
    track.require(F0Domain::LinearHz)?;
    let anchors: Vec<usize> = (0..track.len()).filter(|&i| track.voiced[i]).collect();
    let (&first, &last) = match (anchors.first(), anchors.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(Error::NoVoicedFrames),
    };
    let mut f0 = track.f0.clone();
    f0[..first].fill(track.f0[first]);
    f0[last + 1..].fill(track.f0[last]);
    for pair in anchors.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let (va, vb) = (track.f0[a], track.f0[b]);
        for (i, v) in f0.iter_mut().enumerate().take(b).skip(a + 1) {
            let t = (i - a) as f64 / (b - a) as f64;
            *v = va + t * (vb - va);
        }
    }
    Ok(PitchTrack {
        f0,
        ..track.clone()
    })
}

/// Median filter with edge replication. Voicing flags are left as they are.
pub fn smooth(track: &PitchTrack, window: usize) -> Result<PitchTrack> {
    if window % 2 == 0 {
        return Err(Error::InvalidConfig(format!(
            "median window must be odd, got {window}"
        )));
    }
    let n = track.len();
    let half = window / 2;
    let mut scratch = Vec::with_capacity(window);
    let f0 = (0..n)
        .map(|i| {
            scratch.clear();
            scratch.extend(
                (0..window).map(|w| track.f0[(i + w).saturating_sub(half).min(n - 1)]),
            );
            scratch.sort_by(f64::total_cmp);
            scratch[half]
        })
        .collect();
    Ok(PitchTrack {
        f0,
        ..track.clone()
    })
}

/// Natural log of every frame. Run after interpolation so that no zeros remain.
pub fn to_log(track: &PitchTrack) -> Result<PitchTrack> {
    track.require(F0Domain::LinearHz)?;
    let f0 = track
        .f0
        .iter()
        .enumerate()
        .map(|(frame, &value)| {
            if value > 0.0 {
                Ok(value.ln())
            } else {
                Err(Error::NonPositiveF0 { frame, value })
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PitchTrack {
        f0,
        domain: F0Domain::LogHz,
        ..track.clone()
    })
}

/// Raw estimate, interpolation, median smoothing, log: the track phoneme
/// aggregation consumes. Also returns the smoothed linear track.
pub fn extract_log_f0(audio: &AudioBuffer, cfg: &PitchConfig) -> Result<(PitchTrack, PitchTrack)> {
    let raw = estimate_f0(audio, cfg)?;
    let filled = interpolate_unvoiced(&raw)?;
    let smoothed = smooth(&filled, cfg.smooth_window)?;
    let log = to_log(&smoothed)?;
    Ok((smoothed, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::PI;

    fn tone(freq: f64, rate: u32, secs: f64) -> AudioBuffer {
        let n = (secs * rate as f64) as usize;
        AudioBuffer::new(
            (0..n)
                .map(|i| 0.5 * (2.0 * PI * freq * i as f64 / rate as f64).sin())
                .collect(),
            rate,
        )
    }

    fn linear(f0: Vec<f64>, voiced: Vec<bool>) -> PitchTrack {
        PitchTrack {
            f0,
            voiced,
            frame_hop: 0.01,
            first_center: 0.02,
            domain: F0Domain::LinearHz,
        }
    }

    fn median(mut v: Vec<f64>) -> f64 {
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    }

    #[test]
    fn pure_tones_recover_their_frequency() {
        for freq in [80.0, 110.0, 220.0, 330.0, 400.0] {
            let track = estimate_f0(&tone(freq, 24000, 1.0), &PitchConfig::default()).unwrap();
            let voiced: Vec<f64> = (0..track.len())
                .filter(|&i| track.voiced[i])
                .map(|i| track.f0[i])
                .collect();
            assert!(voiced.len() > track.len() / 2);
            let m = median(voiced);
            assert!((m - freq).abs() / freq < 0.01, "{freq}: {m}");
        }
    }

    #[test]
    fn silence_is_unvoiced() {
        let audio = AudioBuffer::new(vec![0.0; 24000], 24000);
        let track = estimate_f0(&audio, &PitchConfig::default()).unwrap();
        assert!(track.voiced.iter().all(|v| !v));
        assert!(track.f0.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn white_noise_is_mostly_unvoiced() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let audio = AudioBuffer::new((0..24000).map(|_| rng.gen_range(-0.5..0.5)).collect(), 24000);
        let track = estimate_f0(&audio, &PitchConfig::default()).unwrap();
        assert!(track.voiced_fraction() < 0.2, "{}", track.voiced_fraction());
    }

    #[test]
    fn rejects_bad_config() {
        let audio = tone(100.0, 16000, 0.5);
        let mut cfg = PitchConfig::default();
        cfg.f0_min = 600.0;
        assert!(estimate_f0(&audio, &cfg).is_err());
        let mut cfg = PitchConfig::default();
        cfg.f0_min = 20.0;
        assert!(matches!(estimate_f0(&audio, &cfg), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn frame_timing() {
        let track = estimate_f0(&tone(200.0, 16000, 0.5), &PitchConfig::default()).unwrap();
        assert_eq!(track.len(), (8000 - 640) / 160 + 1);
        assert!((track.first_center - 0.02).abs() < 1e-12);
        assert!((track.frame_hop - 0.01).abs() < 1e-12);
    }

    #[test]
    fn interpolation_cases() {
        let t = linear(vec![100.0, 0.0, 120.0], vec![true, false, true]);
        assert_eq!(interpolate_unvoiced(&t).unwrap().f0, vec![100.0, 110.0, 120.0]);
        assert_eq!(interpolate_unvoiced(&t).unwrap().voiced, t.voiced);

        let t = linear(vec![100.0, 130.0], vec![true, true]);
        assert_eq!(interpolate_unvoiced(&t).unwrap(), t);

        let t = linear(vec![0.0, 0.0, 150.0], vec![false, false, true]);
        assert_eq!(interpolate_unvoiced(&t).unwrap().f0, vec![150.0; 3]);

        let t = linear(vec![150.0, 0.0, 0.0], vec![true, false, false]);
        assert_eq!(interpolate_unvoiced(&t).unwrap().f0, vec![150.0; 3]);

        let t = linear(vec![0.0, 0.0], vec![false, false]);
        assert!(matches!(interpolate_unvoiced(&t), Err(Error::NoVoicedFrames)));
    }

    #[test]
    fn smoothing_cases() {
        let t = linear(vec![100.0, 100.0, 300.0, 100.0, 100.0], vec![true; 5]);
        assert_eq!(smooth(&t, 3).unwrap().f0, vec![100.0; 5]);
        let t = linear(vec![1.0, 5.0, 2.0, 8.0], vec![true, false, true, true]);
        assert_eq!(smooth(&t, 1).unwrap(), t);
        let t = linear(vec![7.0; 6], vec![true; 6]);
        assert_eq!(smooth(&t, 5).unwrap(), t);
        assert!(smooth(&t, 4).is_err());
    }

    #[test]
    fn log_transform() {
        let t = linear(vec![100.0, 150.0, 200.0], vec![true; 3]);
        let l = to_log(&t).unwrap();
        assert!((l.f0[0] - 4.605170185988091).abs() < 1e-12);
        assert!(l.f0.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(l.domain, F0Domain::LogHz);
        assert!(matches!(to_log(&l), Err(Error::WrongDomain { .. })));
        let z = linear(vec![100.0, 0.0], vec![true, false]);
        assert!(matches!(to_log(&z), Err(Error::NonPositiveF0 { frame: 1, .. })));
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let t = linear(vec![100.0, 0.0, 120.5], vec![true, false, true]);
        t.write_csv(&path).unwrap();
        let back = PitchTrack::read_csv(&path).unwrap();
        assert_eq!(back.f0, t.f0);
        assert_eq!(back.voiced, t.voiced);
        assert!((back.frame_hop - 0.01).abs() < 1e-12);
        let logged = to_log(&linear(vec![100.0], vec![true])).unwrap();
        assert!(matches!(logged.write_csv(&path), Err(Error::WrongDomain { .. })));
    }

    proptest::proptest! {
        #[test]
        fn interpolation_is_total_and_idempotent(
            values in proptest::collection::vec((50.0f64..400.0, proptest::bool::ANY), 1..60)
        ) {
            let f0: Vec<f64> = values.iter().map(|&(v, on)| if on { v } else { 0.0 }).collect();
            let voiced: Vec<bool> = values.iter().map(|&(_, on)| on).collect();
            let t = linear(f0, voiced);
            match interpolate_unvoiced(&t) {
                Ok(once) => {
                    proptest::prop_assert!(once.f0.iter().all(|&v| v > 0.0));
                    proptest::prop_assert_eq!(&interpolate_unvoiced(&once).unwrap(), &once);
                }
                Err(_) => proptest::prop_assert!(t.voiced.iter().all(|v| !v)),
            }
        }

        #[test]
        fn smoothing_stays_within_range(
            f0 in proptest::collection::vec(50.0f64..400.0, 1..60),
            half in 0usize..4
        ) {
            let t = linear(f0.clone(), vec![true; f0.len()]);
            let s = smooth(&t, 2 * half + 1).unwrap();
            let lo = f0.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = f0.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            proptest::prop_assert!(s.f0.iter().all(|&v| v >= lo && v <= hi));
        }
    }
}
