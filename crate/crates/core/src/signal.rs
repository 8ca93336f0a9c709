//! Audio ingestion, framing, and the log-mel / mel-cepstrum front end used by
//! pitch tracking and the objective metrics.

use std::f64::consts::PI;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1};
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floor applied before taking the log of mel energies.
pub const LOG_FLOOR: f64 = 1e-10;

/// Mono audio with samples in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        Self {
            samples,
            sample_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Reads a 16-bit PCM mono WAV file. Samples are divided by 32768.
pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioBuffer> {
    let path = path.as_ref();
    let reader = hound::WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(source) => Error::io(path, source),
        other => Error::WavRead {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    })?;
    let spec = reader.spec();
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        let kind = match spec.sample_format {
            hound::SampleFormat::Int => "integer",
            hound::SampleFormat::Float => "float",
        };
        return Err(Error::WavEncoding {
            path: path.to_path_buf(),
            found: format!("{}-bit {kind}", spec.bits_per_sample),
        });
    }
    if spec.channels != 1 {
        return Err(Error::WavChannels {
            path: path.to_path_buf(),
            channels: spec.channels,
        });
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| {
            s.map(|v| v as f64 / 32768.0).map_err(|e| Error::WavRead {
                path: path.to_path_buf(),
                message: e.to_string(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if samples.is_empty() {
        return Err(Error::EmptyAudio(path.to_path_buf()));
    }
    Ok(AudioBuffer::new(samples, spec.sample_rate))
}

/// Writes a buffer as 16-bit PCM mono. Values outside `[-1, 1)` are clipped.
pub fn write_wav(path: impl AsRef<Path>, audio: &AudioBuffer) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: audio.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let wrap = |e: hound::Error| match e {
        hound::Error::IoError(source) => Error::io(path, source),
        other => Error::WavRead {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(wrap)?;
    for &s in &audio.samples {
        let v = (s * 32768.0).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16;
        writer.write_sample(v).map_err(wrap)?;
    }
    writer.finalize().map_err(wrap)
}

/// Splits `samples` into full frames; a partial trailing frame is dropped.
pub fn frame_signal(samples: &[f64], frame_len: usize, hop: usize) -> Result<Vec<&[f64]>> {
    if frame_len == 0 || hop == 0 || hop > frame_len {
        return Err(Error::InvalidConfig(format!(
            "need 0 < hop <= frame_len, got hop {hop}, frame_len {frame_len}"
        )));
    }
    if frame_len > samples.len() {
        return Err(Error::SignalTooShort {
            frame_len,
            len: samples.len(),
        });
    }
    let count = (samples.len() - frame_len) / hop + 1;
    Ok((0..count)
        .map(|i| &samples[i * hop..i * hop + frame_len])
        .collect())
}

/// Periodic Hann window.
pub fn hann_window(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos())
        .collect()
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MelConfig {
    /// Analysis frame length in samples.
    pub frame_len: usize,
    /// Frame hop in samples.
    pub hop: usize,
    pub n_fft: usize,
    pub n_mels: usize,
    pub fmin: f64,
    pub fmax: f64,
}

impl MelConfig {
    fn validate(&self, sample_rate: u32) -> Result<()> {
        let nyquist = sample_rate as f64 / 2.0;
        if self.frame_len == 0 || self.hop == 0 || self.hop > self.frame_len {
            return Err(Error::InvalidConfig(format!(
                "need 0 < hop <= frame_len, got hop {}, frame_len {}",
                self.hop, self.frame_len
            )));
        }
        if self.n_fft < self.frame_len {
            return Err(Error::InvalidConfig(format!(
                "n_fft {} is shorter than frame_len {}",
                self.n_fft, self.frame_len
            )));
        }
        if self.n_mels < 2 {
            return Err(Error::InvalidConfig("n_mels must be at least 2".into()));
        }
        if !(self.fmin >= 0.0 && self.fmin < self.fmax && self.fmax <= nyquist) {
            return Err(Error::InvalidConfig(format!(
                "need 0 <= fmin < fmax <= {nyquist}, got fmin {}, fmax {}",
                self.fmin, self.fmax
            )));
        }
        Ok(())
    }
}

/// Triangular mel filterbank over the `n_fft / 2 + 1` non-negative frequency bins.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    /// `[n_mels x n_bins]` filter weights.
    pub weights: Array2<f64>,
    /// Center frequency of each band in Hz, strictly increasing.
    pub centers: Vec<f64>,
}

impl MelFilterbank {
    pub fn new(sample_rate: u32, cfg: &MelConfig) -> Result<Self> {
        cfg.validate(sample_rate)?;
        let n_bins = cfg.n_fft / 2 + 1;
        let (lo, hi) = (hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax));
        let edges: Vec<f64> = (0..cfg.n_mels + 2)
            .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (cfg.n_mels + 1) as f64))
            .collect();
        let bin_hz = sample_rate as f64 / cfg.n_fft as f64;
        let mut weights = Array2::zeros((cfg.n_mels, n_bins));
        for m in 0..cfg.n_mels {
            let (left, center, right) = (edges[m], edges[m + 1], edges[m + 2]);
            for k in 0..n_bins {
                let f = k as f64 * bin_hz;
                let w = if f > left && f <= center {
                    (f - left) / (center - left)
                } else if f > center && f < right {
                    (right - f) / (right - center)
                } else {
                    0.0
                };
                weights[[m, k]] = w;
            }
            if weights.row(m).sum() <= 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "mel band {m} ({left:.1}-{right:.1} Hz) covers no FFT bin; raise n_fft or lower n_mels"
                )));
            }
        }
        Ok(Self {
            weights,
            centers: edges[1..=cfg.n_mels].to_vec(),
        })
    }
}

/// Log-mel energies, one row per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    pub frames: Array2<f64>,
    /// Frame hop in seconds.
    pub frame_hop: f64,
    pub n_mels: usize,
}

impl MelSpectrogram {
    pub fn n_frames(&self) -> usize {
        self.frames.nrows()
    }
}

/// Hann-windowed power spectrum through a triangular mel filterbank, natural
/// log with floor [`LOG_FLOOR`].
pub fn mel_spectrogram(audio: &AudioBuffer, cfg: &MelConfig) -> Result<MelSpectrogram> {
    let bank = MelFilterbank::new(audio.sample_rate, cfg)?;
    let frames = frame_signal(&audio.samples, cfg.frame_len, cfg.hop)?;
    let window = hann_window(cfg.frame_len);
    let fft = FftPlanner::new().plan_fft_forward(cfg.n_fft);
    let n_bins = cfg.n_fft / 2 + 1;

    let mut out = Array2::zeros((frames.len(), cfg.n_mels));
    let mut buf = vec![Complex::new(0.0, 0.0); cfg.n_fft];
    let mut power = Array1::zeros(n_bins);
    for (i, frame) in frames.iter().enumerate() {
        buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
        for (b, (&x, &w)) in buf.iter_mut().zip(frame.iter().zip(&window)) {
            b.re = x * w;
        }
        fft.process(&mut buf);
        for (p, c) in power.iter_mut().zip(&buf[..n_bins]) {
            *p = c.norm_sqr();
        }
        let energies = bank.weights.dot(&power);
        for (o, e) in out.row_mut(i).iter_mut().zip(energies.iter()) {
            *o = e.max(LOG_FLOOR).ln();
        }
    }
    Ok(MelSpectrogram {
        frames: out,
        frame_hop: cfg.hop as f64 / audio.sample_rate as f64,
        n_mels: cfg.n_mels,
    })
}

/// Orthonormal DCT-II matrix, `[n x n]`, rows indexed by coefficient.
pub fn dct_matrix(n: usize) -> Array2<f64> {
    let mut m = Array2::zeros((n, n));
    let nf = n as f64;
    for k in 0..n {
        let scale = if k == 0 {
            (1.0 / nf).sqrt()
        } else {
            (2.0 / nf).sqrt()
        };
        for j in 0..n {
            m[[k, j]] = scale * (PI * k as f64 * (2.0 * j as f64 + 1.0) / (2.0 * nf)).cos();
        }
    }
    m
}

/// First `n_coeffs` orthonormal DCT-II coefficients of every log-mel frame.
pub fn mel_cepstrum(spec: &MelSpectrogram, n_coeffs: usize) -> Result<Array2<f64>> {
    if n_coeffs == 0 || n_coeffs > spec.n_mels {
        return Err(Error::OutOfRange(format!(
            "n_coeffs {n_coeffs} not in 1..={}",
            spec.n_mels
        )));
    }
    let dct = dct_matrix(spec.n_mels);
    let basis = dct.slice(ndarray::s![..n_coeffs, ..]);
    Ok(spec.frames.dot(&basis.t()))
}

/// Inverts a full-order cepstral frame back to log-mel values.
pub fn inverse_cepstrum(cepstrum: ArrayView1<f64>) -> Array1<f64> {
    dct_matrix(cepstrum.len()).t().dot(&cepstrum)
}
