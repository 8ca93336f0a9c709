//! DTW alignment, mel-cepstral distortion and F0 frame error rates.

use std::fmt::Write as _;
use std::ops::Range;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pitch::{estimate_f0, F0Domain, PitchConfig, PitchTrack};
use crate::signal::{mel_cepstrum, mel_spectrogram, AudioBuffer, MelConfig};

/// Monotone alignment from `(0, 0)` to `(n - 1, m - 1)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WarpPath {
    pairs: Vec<(usize, usize)>,
}

impl WarpPath {
    /// Checks start, end and step shape.
    pub fn new(pairs: Vec<(usize, usize)>, n: usize, m: usize) -> Result<Self> {
        let ok_ends = pairs.first() == Some(&(0, 0)) && pairs.last() == Some(&(n.wrapping_sub(1), m.wrapping_sub(1)));
        let ok_steps = pairs.windows(2).all(|w| {
            let (di, dj) = (w[1].0.wrapping_sub(w[0].0), w[1].1.wrapping_sub(w[0].1));
            matches!((di, dj), (1, 0) | (0, 1) | (1, 1))
        });
        if !(ok_ends && ok_steps) {
            return Err(Error::OutOfRange(format!("not a warp path for {n} x {m} frames")));
        }
        Ok(Self { pairs })
    }

    /// Time-parallel path `(i, i)` for equal-length sequences.
    pub fn diagonal(n: usize) -> Self {
        Self {
            pairs: (0..n).map(|i| (i, i)).collect(),
        }
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    fn check_bounds(&self, n: usize, m: usize) -> Result<()> {
        match self.pairs.last() {
            Some(&(i, j)) if i < n && j < m => Ok(()),
            _ => Err(Error::OutOfRange(format!(
                "warp path does not fit sequences of {n} and {m} frames"
            ))),
        }
    }
}

fn euclidean(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Minimum-cost alignment of two frame sequences (rows) under Euclidean frame
/// distance. Ties prefer the diagonal step, then `(1, 0)`, then `(0, 1)`.
pub fn dtw_align(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<(WarpPath, f64)> {
    let (n, m) = (a.nrows(), b.nrows());
    if n == 0 || m == 0 {
        return Err(Error::Empty("sequence to align"));
    }
    if a.ncols() != b.ncols() {
        return Err(Error::Dimension(format!(
            "frame widths differ: {} vs {}",
            a.ncols(),
            b.ncols()
        )));
    }
    let mut acc = Array2::from_elem((n, m), f64::INFINITY);
    // 0 diagonal, 1 from (i-1, j), 2 from (i, j-1)
    let mut back = Array2::<u8>::zeros((n, m));
    for i in 0..n {
        for j in 0..m {
            let d = euclidean(a.row(i), b.row(j));
            if i == 0 && j == 0 {
                acc[[0, 0]] = d;
                continue;
            }
            let mut best = (f64::INFINITY, 0u8);
            if i > 0 && j > 0 {
                best = (acc[[i - 1, j - 1]], 0);
            }
            if i > 0 && acc[[i - 1, j]] < best.0 {
                best = (acc[[i - 1, j]], 1);
            }
            if j > 0 && acc[[i, j - 1]] < best.0 {
                best = (acc[[i, j - 1]], 2);
            }
            acc[[i, j]] = best.0 + d;
            back[[i, j]] = best.1;
        }
    }
    let mut pairs = vec![(n - 1, m - 1)];
    let (mut i, mut j) = (n - 1, m - 1);
    while (i, j) != (0, 0) {
        match back[[i, j]] {
            0 if i > 0 && j > 0 => {
                i -= 1;
                j -= 1;
            }
            1 if i > 0 => i -= 1,
            _ if j > 0 => j -= 1,
            _ => i -= 1,
        }
        pairs.push((i, j));
    }
    pairs.reverse();
    Ok((WarpPath { pairs }, acc[[n - 1, m - 1]]))
}

const MCD_SCALE: f64 = 10.0 / std::f64::consts::LN_10;

/// Mean over path pairs of `(10 / ln 10) * sqrt(2 * sum_d (a_d - b_d)^2)`,
/// `d` ranging over `coeffs`.
pub fn mcd(a: ArrayView2<f64>, b: ArrayView2<f64>, path: &WarpPath, coeffs: Range<usize>) -> Result<f64> {
    if coeffs.is_empty() || coeffs.end > a.ncols() || coeffs.end > b.ncols() {
        return Err(Error::OutOfRange(format!(
            "coefficient range {coeffs:?} outside matrices of width {} and {}",
            a.ncols(),
            b.ncols()
        )));
    }
    path.check_bounds(a.nrows(), b.nrows())?;
    if path.is_empty() {
        return Err(Error::Empty("warp path"));
    }
    let total: f64 = path
        .pairs
        .iter()
        .map(|&(i, j)| {
            let sq: f64 = coeffs.clone().map(|d| (a[[i, d]] - b[[j, d]]).powi(2)).sum();
            MCD_SCALE * (2.0 * sq).sqrt()
        })
        .sum();
    Ok(total / path.len() as f64)
}

/// Frame counts behind VDE, GPE and FFE.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct F0ErrorCounts {
    pub pairs: usize,
    pub voicing_mismatch: usize,
    pub both_voiced: usize,
    pub gross: usize,
}

impl F0ErrorCounts {
    pub fn vde(&self) -> f64 {
        self.voicing_mismatch as f64 / self.pairs as f64
    }

    /// Zero when no pair is voiced on both sides.
    pub fn gpe(&self) -> f64 {
        if self.both_voiced == 0 {
            0.0
        } else {
            self.gross as f64 / self.both_voiced as f64
        }
    }

    pub fn ffe(&self) -> f64 {
        (self.voicing_mismatch + self.gross) as f64 / self.pairs as f64
    }
}

/// Counts voicing mismatches and gross errors `|f_syn - f_ref| > threshold * f_ref`.
pub fn f0_error_counts(
    reference: &PitchTrack,
    synthesized: &PitchTrack,
    path: &WarpPath,
    threshold: f64,
) -> Result<F0ErrorCounts> {
    for t in [reference, synthesized] {
        if t.domain != F0Domain::LinearHz {
            return Err(Error::WrongDomain { expected: "linear Hz" });
        }
    }
    if !(threshold > 0.0) {
        return Err(Error::InvalidConfig(format!("gross error threshold {threshold} must be positive")));
    }
    if path.is_empty() {
        return Err(Error::Empty("warp path"));
    }
    path.check_bounds(reference.len(), synthesized.len())?;
    let mut c = F0ErrorCounts {
        pairs: path.len(),
        voicing_mismatch: 0,
        both_voiced: 0,
        gross: 0,
    };
    for &(i, j) in &path.pairs {
        match (reference.voiced[i], synthesized.voiced[j]) {
            (true, true) => {
                c.both_voiced += 1;
                let (fr, fs) = (reference.f0[i], synthesized.f0[j]);
                if (fs - fr).abs() > threshold * fr {
                    c.gross += 1;
                }
            }
            (false, false) => {}
            _ => c.voicing_mismatch += 1,
        }
    }
    Ok(c)
}

pub fn vde(reference: &PitchTrack, synthesized: &PitchTrack, path: &WarpPath) -> Result<f64> {
    // the threshold does not affect voicing counts
    Ok(f0_error_counts(reference, synthesized, path, 0.2)?.vde())
}

pub fn gpe(reference: &PitchTrack, synthesized: &PitchTrack, path: &WarpPath, threshold: f64) -> Result<f64> {
    Ok(f0_error_counts(reference, synthesized, path, threshold)?.gpe())
}

pub fn ffe(reference: &PitchTrack, synthesized: &PitchTrack, path: &WarpPath, threshold: f64) -> Result<f64> {
    Ok(f0_error_counts(reference, synthesized, path, threshold)?.ffe())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsConfig {
    pub gpe_threshold: f64,
    /// Cepstral coefficients computed per frame.
    pub n_cepstra: usize,
    /// First coefficient included in MCD; 0 would include energy.
    pub mcd_first: usize,
    pub n_fft: usize,
    pub n_mels: usize,
    pub fmin: f64,
    /// Upper mel edge; `None` means the Nyquist frequency.
    pub fmax: Option<f64>,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            gpe_threshold: 0.2,
            n_cepstra: 13,
            mcd_first: 1,
            n_fft: 1024,
            n_mels: 40,
            fmin: 0.0,
            fmax: None,
        }
    }
}

impl MetricsConfig {
    /// Spectral analysis with the same frames as the pitch tracker, so pitch
    /// and mel frame indices coincide.
    pub fn mel_config(&self, pitch: &PitchConfig, sample_rate: u32) -> MelConfig {
        let frame_len = pitch.frame_samples(sample_rate);
        MelConfig {
            frame_len,
            hop: pitch.hop_samples(sample_rate),
            n_fft: self.n_fft.max(frame_len.next_power_of_two()),
            n_mels: self.n_mels,
            fmin: self.fmin,
            fmax: self.fmax.unwrap_or(sample_rate as f64 / 2.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub utterance_id: String,
    pub mcd: f64,
    pub ffe: f64,
    pub vde: f64,
    pub gpe: f64,
    /// Warp path length, the denominator of FFE and VDE.
    pub n_frames: usize,
    /// Denominator of GPE.
    pub n_both_voiced: usize,
}

/// DTW on log-mel frames, then MCD and F0 errors along the same path.
pub fn compare_audio(
    utterance_id: &str,
    reference: &AudioBuffer,
    test: &AudioBuffer,
    pitch: &PitchConfig,
    cfg: &MetricsConfig,
) -> Result<MetricReport> {
    if reference.sample_rate != test.sample_rate {
        return Err(Error::InvalidConfig(format!(
            "{utterance_id}: sample rates differ ({} vs {})",
            reference.sample_rate, test.sample_rate
        )));
    }
    let mel_cfg = cfg.mel_config(pitch, reference.sample_rate);
    let (mr, mt) = (mel_spectrogram(reference, &mel_cfg)?, mel_spectrogram(test, &mel_cfg)?);
    let (path, _) = dtw_align(mr.frames.view(), mt.frames.view())?;
    let (cr, ct) = (mel_cepstrum(&mr, cfg.n_cepstra)?, mel_cepstrum(&mt, cfg.n_cepstra)?);
    let mcd = mcd(cr.view(), ct.view(), &path, cfg.mcd_first..cfg.n_cepstra)?;
    let (pr, pt) = (estimate_f0(reference, pitch)?, estimate_f0(test, pitch)?);
    let counts = f0_error_counts(&pr, &pt, &path, cfg.gpe_threshold)?;
    Ok(MetricReport {
        utterance_id: utterance_id.to_string(),
        mcd,
        ffe: counts.ffe(),
        vde: counts.vde(),
        gpe: counts.gpe(),
        n_frames: counts.pairs,
        n_both_voiced: counts.both_voiced,
    })
}

/// `utterance_id,mcd,ffe,vde,gpe,n_frames,n_both_voiced`
pub fn report_csv(reports: &[MetricReport]) -> String {
    let mut out = String::from("utterance_id,mcd,ffe,vde,gpe,n_frames,n_both_voiced\n");
    for r in reports {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.utterance_id, r.mcd, r.ffe, r.vde, r.gpe, r.n_frames, r.n_both_voiced
        )
        .unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn track(f0: &[f64], voiced: &[bool]) -> PitchTrack {
        PitchTrack {
            f0: f0.to_vec(),
            voiced: voiced.to_vec(),
            frame_hop: 0.01,
            first_center: 0.02,
            domain: F0Domain::LinearHz,
        }
    }

    /// Every monotone path by recursion; returns the cheapest total cost.
    fn brute_force(a: &Array2<f64>, b: &Array2<f64>, i: usize, j: usize) -> f64 {
        let d = euclidean(a.row(i), b.row(j));
        if i == 0 && j == 0 {
            return d;
        }
        let mut best = f64::INFINITY;
        if i > 0 {
            best = best.min(brute_force(a, b, i - 1, j));
        }
        if j > 0 {
            best = best.min(brute_force(a, b, i, j - 1));
        }
        if i > 0 && j > 0 {
            best = best.min(brute_force(a, b, i - 1, j - 1));
        }
        best + d
    }

    fn path_cost(a: &Array2<f64>, b: &Array2<f64>, p: &WarpPath) -> f64 {
        p.pairs().iter().map(|&(i, j)| euclidean(a.row(i), b.row(j))).sum()
    }

    fn random(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Array2<f64> {
        Array2::from_shape_fn((n, d), |_| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn dtw_matches_exhaustive_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..60 {
            let (n, m) = (rng.gen_range(1..=6), rng.gen_range(1..=6));
            let (a, b) = (random(&mut rng, n, 3), random(&mut rng, m, 3));
            let (path, cost) = dtw_align(a.view(), b.view()).unwrap();
            let oracle = brute_force(&a, &b, n - 1, m - 1);
            assert!((cost - oracle).abs() < 1e-12);
            assert!((path_cost(&a, &b, &path) - cost).abs() < 1e-12);
            WarpPath::new(path.pairs().to_vec(), n, m).unwrap();
            let (_, reverse) = dtw_align(b.view(), a.view()).unwrap();
            assert!((reverse - cost).abs() < 1e-12);
        }
    }

    #[test]
    fn dtw_simple_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random(&mut rng, 7, 2);
        let (p, c) = dtw_align(a.view(), a.view()).unwrap();
        assert_eq!(p, WarpPath::diagonal(7));
        assert_eq!(c, 0.0);
        let one = random(&mut rng, 1, 2);
        let (p, _) = dtw_align(one.view(), a.view()).unwrap();
        assert_eq!(p.len(), 7);
        let b = random(&mut rng, 7, 2);
        let (p, c) = dtw_align(a.view(), b.view()).unwrap();
        assert!(c <= path_cost(&a, &b, &WarpPath::diagonal(7)) + 1e-12);
        assert!(p.len() >= 7);
        assert!(dtw_align(Array2::<f64>::zeros((0, 2)).view(), a.view()).is_err());
    }

    #[test]
    fn dtw_prefers_the_diagonal_on_ties() {
        let a = Array2::zeros((3, 1));
        let (p, _) = dtw_align(a.view(), a.view()).unwrap();
        assert_eq!(p.pairs(), &[(0, 0), (1, 1), (2, 2)]);
    }

    #[test]
    fn mcd_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random(&mut rng, 5, 13);
        let path = WarpPath::diagonal(5);
        assert_eq!(mcd(a.view(), a.view(), &path, 1..13).unwrap(), 0.0);

        let x = Array2::from_shape_vec((1, 3), vec![0.3, 1.0, -2.0]).unwrap();
        let mut y = x.clone();
        y[[0, 2]] += 0.37;
        let want = 10.0 / 10f64.ln() * 2f64.sqrt() * 0.37;
        assert!((mcd(x.view(), y.view(), &WarpPath::diagonal(1), 1..3).unwrap() - want).abs() < 1e-9);

        let b = random(&mut rng, 5, 13);
        let doubled = &a + &((&b - &a) * 2.0);
        let m1 = mcd(a.view(), b.view(), &path, 1..13).unwrap();
        let m2 = mcd(a.view(), doubled.view(), &path, 1..13).unwrap();
        assert!((m2 - 2.0 * m1).abs() < 1e-9);
        // energy coefficient is ignored by default range
        let mut e = a.clone();
        e.column_mut(0).mapv_inplace(|v| v + 5.0);
        assert_eq!(mcd(a.view(), e.view(), &path, 1..13).unwrap(), 0.0);
        assert!(mcd(a.view(), b.view(), &path, 1..14).is_err());
    }

    #[test]
    fn constructed_frame_error_case() {
        // 10 pairs: 2 voicing mismatches, 8 both voiced of which 3 are gross errors
        let r = track(&[100.0; 10], &[true; 10]);
        let f0 = [100.0, 130.0, 75.0, 121.0, 119.0, 81.0, 100.0, 100.0, 100.0, 100.0];
        let mut v = [true; 10];
        v[8] = false;
        v[9] = false;
        let s = track(&f0, &v);
        let p = WarpPath::diagonal(10);
        let c = f0_error_counts(&r, &s, &p, 0.2).unwrap();
        assert_eq!((c.voicing_mismatch, c.both_voiced, c.gross), (2, 8, 3));
        assert_eq!(ffe(&r, &s, &p, 0.2).unwrap(), 0.5);
        assert_eq!(vde(&r, &s, &p).unwrap(), 0.2);
        assert_eq!(gpe(&r, &s, &p, 0.2).unwrap(), 0.375);
    }

    #[test]
    fn frame_error_examples() {
        let f = [120.0, 180.0, 90.0, 200.0];
        let r = track(&f, &[true, true, false, true]);
        let p = WarpPath::diagonal(4);
        assert_eq!(ffe(&r, &r, &p, 0.2).unwrap(), 0.0);
        let comp = track(&f, &[false, false, true, false]);
        assert_eq!(vde(&r, &comp, &p).unwrap(), 1.0);
        assert_eq!(ffe(&r, &comp, &p, 0.2).unwrap(), 1.0);
        assert_eq!(gpe(&r, &comp, &p, 0.2).unwrap(), 0.0);
        let up = |x: f64| track(&f.map(|v| v * x), &[true, true, false, true]);
        assert_eq!(gpe(&r, &up(1.25), &p, 0.2).unwrap(), 1.0);
        assert_eq!(gpe(&r, &up(1.1), &p, 0.2).unwrap(), 0.0);
        let half = track(&f, &[true, false, false, false]);
        assert_eq!(vde(&r, &half, &p).unwrap(), 0.5);
        let mut log = r.clone();
        log.domain = F0Domain::LogHz;
        assert!(matches!(gpe(&log, &r, &p, 0.2), Err(Error::WrongDomain { .. })));
        assert!(vde(&r, &track(&f[..2], &[true; 2]), &p).is_err());
    }

    #[test]
    fn ffe_bounds_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..100 {
            let (n, m) = (rng.gen_range(5..40), rng.gen_range(5..40));
            let mk = |rng: &mut ChaCha8Rng, n: usize| {
                let f0: Vec<f64> = (0..n).map(|_| rng.gen_range(80.0..300.0)).collect();
                let v: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.7)).collect();
                track(&f0, &v)
            };
            let (r, s) = (mk(&mut rng, n), mk(&mut rng, m));
            let (a, b) = (random(&mut rng, n, 4), random(&mut rng, m, 4));
            let (p, _) = dtw_align(a.view(), b.view()).unwrap();
            let c = f0_error_counts(&r, &s, &p, 0.2).unwrap();
            let (f, v, g) = (c.ffe(), c.vde(), c.gpe());
            assert!(f >= v);
            let both = c.both_voiced as f64 / c.pairs as f64;
            assert!(f <= v + g * both + 1e-12);
            assert!([f, v, g].iter().all(|x| (0.0..=1.0).contains(x)));
        }
    }

    #[test]
    fn identical_audio_scores_zero() {
        let rate = 16_000;
        let samples: Vec<f64> = (0..8000)
            .map(|n| 0.4 * (2.0 * std::f64::consts::PI * 150.0 * n as f64 / rate as f64).sin())
            .collect();
        let audio = AudioBuffer::new(samples, rate);
        let r = compare_audio("u", &audio, &audio, &PitchConfig::default(), &MetricsConfig::default()).unwrap();
        assert_eq!((r.mcd, r.ffe, r.vde, r.gpe), (0.0, 0.0, 0.0, 0.0));
        assert!(r.n_both_voiced > 0);
        assert!(report_csv(&[r]).starts_with("utterance_id,mcd,ffe,vde,gpe,n_frames,n_both_voiced\nu,0,0,0,0,"));
    }
}
