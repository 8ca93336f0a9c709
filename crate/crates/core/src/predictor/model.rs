use ndarray::{s, Array1, Array2, ArrayView1};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ordinal::{decode_ordinal, DecodeRule, OrdinalTarget};
use crate::error::{Error, Result};

/// Phoneme id reserved for window positions past either end of the utterance.
pub const PAD: usize = 0;

/// Probabilities are clamped to `[P_CLAMP, 1 - P_CLAMP]` inside the loss.
pub const P_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PredictorConfig {
    /// Phones of context on each side of the predicted one.
    pub context: usize,
    pub phone_dim: usize,
    pub speaker_dim: usize,
    pub hidden: usize,
    pub hidden2: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    /// Utterances per update.
    pub batch: usize,
    pub valid_fraction: f64,
    pub decode_rule: DecodeRule,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            context: 2,
            phone_dim: 16,
            speaker_dim: 8,
            hidden: 64,
            hidden2: 32,
            lr: 3e-3,
            weight_decay: 1e-6,
            epochs: 30,
            batch: 8,
            valid_fraction: 0.1,
            decode_rule: DecodeRule::FirstFailure,
        }
    }
}

/// All trainable tensors. Gradients and optimizer moments use the same layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    /// `[vocab + 1, phone_dim]`; row 0 is the padding embedding.
    pub phone_emb: Array2<f64>,
    pub speaker_emb: Array2<f64>,
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub w_f0: Array2<f64>,
    pub b_f0: Array1<f64>,
    pub w_dur: Array2<f64>,
    pub b_dur: Array1<f64>,
}

impl Params {
    pub const GROUPS: [&'static str; 10] = [
        "phone_emb",
        "speaker_emb",
        "w1",
        "b1",
        "w2",
        "b2",
        "w_f0",
        "b_f0",
        "w_dur",
        "b_dur",
    ];

    pub fn zeros_like(other: &Params) -> Self {
        Self {
            phone_emb: Array2::zeros(other.phone_emb.dim()),
            speaker_emb: Array2::zeros(other.speaker_emb.dim()),
            w1: Array2::zeros(other.w1.dim()),
            b1: Array1::zeros(other.b1.dim()),
            w2: Array2::zeros(other.w2.dim()),
            b2: Array1::zeros(other.b2.dim()),
            w_f0: Array2::zeros(other.w_f0.dim()),
            b_f0: Array1::zeros(other.b_f0.dim()),
            w_dur: Array2::zeros(other.w_dur.dim()),
            b_dur: Array1::zeros(other.b_dur.dim()),
        }
    }

    /// `(name, shape, values)` for every group, in [`Params::GROUPS`] order.
    pub fn groups(&self) -> Vec<(&'static str, Vec<usize>, &[f64])> {
        vec![
            ("phone_emb", self.phone_emb.shape().to_vec(), self.phone_emb.as_slice().unwrap()),
            ("speaker_emb", self.speaker_emb.shape().to_vec(), self.speaker_emb.as_slice().unwrap()),
            ("w1", self.w1.shape().to_vec(), self.w1.as_slice().unwrap()),
            ("b1", self.b1.shape().to_vec(), self.b1.as_slice().unwrap()),
            ("w2", self.w2.shape().to_vec(), self.w2.as_slice().unwrap()),
            ("b2", self.b2.shape().to_vec(), self.b2.as_slice().unwrap()),
            ("w_f0", self.w_f0.shape().to_vec(), self.w_f0.as_slice().unwrap()),
            ("b_f0", self.b_f0.shape().to_vec(), self.b_f0.as_slice().unwrap()),
            ("w_dur", self.w_dur.shape().to_vec(), self.w_dur.as_slice().unwrap()),
            ("b_dur", self.b_dur.shape().to_vec(), self.b_dur.as_slice().unwrap()),
        ]
    }

    pub fn groups_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        let Params {
            phone_emb,
            speaker_emb,
            w1,
            b1,
            w2,
            b2,
            w_f0,
            b_f0,
            w_dur,
            b_dur,
        } = self;
        vec![
            ("phone_emb", phone_emb.as_slice_mut().unwrap()),
            ("speaker_emb", speaker_emb.as_slice_mut().unwrap()),
            ("w1", w1.as_slice_mut().unwrap()),
            ("b1", b1.as_slice_mut().unwrap()),
            ("w2", w2.as_slice_mut().unwrap()),
            ("b2", b2.as_slice_mut().unwrap()),
            ("w_f0", w_f0.as_slice_mut().unwrap()),
            ("b_f0", b_f0.as_slice_mut().unwrap()),
            ("w_dur", w_dur.as_slice_mut().unwrap()),
            ("b_dur", b_dur.as_slice_mut().unwrap()),
        ]
    }

    pub fn scale(&mut self, factor: f64) {
        for (_, g) in self.groups_mut() {
            g.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn norm(&self) -> f64 {
        self.groups()
            .iter()
            .flat_map(|(_, _, g)| g.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.groups().iter().all(|(_, _, g)| g.iter().all(|v| v.is_finite()))
    }
}

/// Inputs for one phone position.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorFeatures {
    /// Phoneme ids at offsets `-C..=C`, [`PAD`] beyond the utterance.
    pub window: Vec<usize>,
    pub speaker: usize,
    /// Utterance F0-token mean and std, duration-token mean and std, each divided by `K`.
    pub style: [f64; 4],
}

/// Token statistics of an utterance in the form the predictor consumes.
pub fn style_from_tokens(f0_tokens: &[usize], dur_tokens: &[usize], k: usize) -> [f64; 4] {
    let stats = |t: &[usize]| {
        if t.is_empty() {
            return (0.0, 0.0);
        }
        let v: Vec<f64> = t.iter().map(|&x| x as f64).collect();
        let (m, s) = crate::clustering::moments_of(&v);
        (m / k as f64, s / k as f64)
    };
    let (fm, fs) = stats(f0_tokens);
    let (dm, ds) = stats(dur_tokens);
    [fm, fs, dm, ds]
}

/// Intermediate activations of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Activations {
    x: Array1<f64>,
    h1: Array1<f64>,
    h2: Array1<f64>,
    pub f0: Array1<f64>,
    pub dur: Array1<f64>,
}

/// Windowed feed-forward predictor with two sigmoid heads of `k` units.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorModel {
    pub config: PredictorConfig,
    pub k: usize,
    /// Phoneme `phonemes[i]` has id `i + 1`.
    pub phonemes: Vec<String>,
    pub speakers: Vec<String>,
    pub params: Params,
    /// Style scalars used when the caller does not supply any.
    pub style_defaults: [f64; 4],
}

fn sigmoid(z: f64) -> f64 {
    crate::mol::sigmoid(z)
}

impl PredictorModel {
    /// Fresh model with Xavier-uniform weights and zero biases.
    pub fn new(
        phonemes: Vec<String>,
        speakers: Vec<String>,
        k: usize,
        config: PredictorConfig,
        seed: u64,
    ) -> Result<Self> {
        if k == 0 || phonemes.is_empty() || speakers.is_empty() {
            return Err(Error::InvalidConfig(
                "predictor needs k >= 1, a phoneme inventory and at least one speaker".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut uniform = |shape: (usize, usize), limit: f64| {
            Array2::from_shape_fn(shape, |_| rng.gen_range(-limit..=limit))
        };
        let xavier = |fan_in: usize, fan_out: usize| (6.0 / (fan_in + fan_out) as f64).sqrt();
        let c = &config;
        let input = (2 * c.context + 1) * c.phone_dim + c.speaker_dim + 4;
        let params = Params {
            phone_emb: uniform((phonemes.len() + 1, c.phone_dim), 0.5),
            speaker_emb: uniform((speakers.len(), c.speaker_dim), 0.5),
            w1: uniform((c.hidden, input), xavier(input, c.hidden)),
            b1: Array1::zeros(c.hidden),
            w2: uniform((c.hidden2, c.hidden), xavier(c.hidden, c.hidden2)),
            b2: Array1::zeros(c.hidden2),
            w_f0: uniform((k, c.hidden2), xavier(c.hidden2, k)),
            b_f0: Array1::zeros(k),
            w_dur: uniform((k, c.hidden2), xavier(c.hidden2, k)),
            b_dur: Array1::zeros(k),
        };
        Ok(Self {
            config,
            k,
            phonemes,
            speakers,
            params,
            style_defaults: [0.5, 0.25, 0.5, 0.25],
        })
    }

    pub fn input_dim(&self) -> usize {
        (2 * self.config.context + 1) * self.config.phone_dim + self.config.speaker_dim + 4
    }

    pub fn phoneme_id(&self, label: &str) -> Result<usize> {
        self.phonemes
            .iter()
            .position(|p| p == label)
            .map(|i| i + 1)
            .ok_or_else(|| Error::UnknownPhoneme(label.to_string()))
    }

    pub fn speaker_id(&self, speaker: &str) -> Result<usize> {
        self.speakers
            .iter()
            .position(|s| s == speaker)
            .ok_or_else(|| Error::UnknownSpeaker(speaker.to_string()))
    }

    /// Features for every position of an utterance.
    pub fn features<S: AsRef<str>>(
        &self,
        phones: &[S],
        speaker: &str,
        style: [f64; 4],
    ) -> Result<Vec<PredictorFeatures>> {
        let ids = phones
            .iter()
            .map(|p| self.phoneme_id(p.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        let speaker = self.speaker_id(speaker)?;
        let c = self.config.context as isize;
        Ok((0..ids.len() as isize)
            .map(|i| PredictorFeatures {
                window: (i - c..=i + c)
                    .map(|j| {
                        if j < 0 || j >= ids.len() as isize {
                            PAD
                        } else {
                            ids[j as usize]
                        }
                    })
                    .collect(),
                speaker,
                style,
            })
            .collect())
    }

    fn check(&self, f: &PredictorFeatures) -> Result<()> {
        if f.window.len() != 2 * self.config.context + 1 {
            return Err(Error::Dimension(format!(
                "window of {} ids, expected {}",
                f.window.len(),
                2 * self.config.context + 1
            )));
        }
        if let Some(&bad) = f.window.iter().find(|&&id| id > self.phonemes.len()) {
            return Err(Error::UnknownPhoneme(format!("id {bad}")));
        }
        if f.speaker >= self.speakers.len() {
            return Err(Error::UnknownSpeaker(format!("id {}", f.speaker)));
        }
        if f.style.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("style features"));
        }
        Ok(())
    }

    pub fn forward(&self, f: &PredictorFeatures) -> Result<Activations> {
        self.check(f)?;
        let p = &self.params;
        let e = self.config.phone_dim;
        let mut x = Array1::zeros(self.input_dim());
        for (slot, &id) in f.window.iter().enumerate() {
            x.slice_mut(s![slot * e..(slot + 1) * e]).assign(&p.phone_emb.row(id));
        }
        let off = f.window.len() * e;
        let sd = self.config.speaker_dim;
        x.slice_mut(s![off..off + sd]).assign(&p.speaker_emb.row(f.speaker));
        x.slice_mut(s![off + sd..]).assign(&ArrayView1::from(&f.style));

        let h1 = (p.w1.dot(&x) + &p.b1).mapv(f64::tanh);
        let h2 = (p.w2.dot(&h1) + &p.b2).mapv(f64::tanh);
        let f0 = (p.w_f0.dot(&h2) + &p.b_f0).mapv(sigmoid);
        let dur = (p.w_dur.dot(&h2) + &p.b_dur).mapv(sigmoid);
        Ok(Activations { x, h1, h2, f0, dur })
    }

    /// Accumulates into `grads` the gradient of [`position_loss`] at one position.
    pub fn backward(
        &self,
        f: &PredictorFeatures,
        act: &Activations,
        f0_target: &[f64],
        dur_target: &[f64],
        grads: &mut Params,
    ) {
        let p = &self.params;
        let dl_f0 = logit_grad(act.f0.view(), f0_target);
        let dl_dur = logit_grad(act.dur.view(), dur_target);

        outer_add(&mut grads.w_f0, &dl_f0, &act.h2);
        grads.b_f0 += &dl_f0;
        outer_add(&mut grads.w_dur, &dl_dur, &act.h2);
        grads.b_dur += &dl_dur;

        let dh2 = p.w_f0.t().dot(&dl_f0) + p.w_dur.t().dot(&dl_dur);
        let dz2 = dh2 * act.h2.mapv(|h| 1.0 - h * h);
        outer_add(&mut grads.w2, &dz2, &act.h1);
        grads.b2 += &dz2;

        let dh1 = p.w2.t().dot(&dz2);
        let dz1 = dh1 * act.h1.mapv(|h| 1.0 - h * h);
        outer_add(&mut grads.w1, &dz1, &act.x);
        grads.b1 += &dz1;

        let dx = p.w1.t().dot(&dz1);
        let e = self.config.phone_dim;
        for (slot, &id) in f.window.iter().enumerate() {
            let mut row = grads.phone_emb.row_mut(id);
            row += &dx.slice(s![slot * e..(slot + 1) * e]);
        }
        let off = f.window.len() * e;
        let mut row = grads.speaker_emb.row_mut(f.speaker);
        row += &dx.slice(s![off..off + self.config.speaker_dim]);
    }

    /// Summed loss and its gradient over a set of labelled positions.
    pub fn loss_and_gradient(&self, examples: &[LabelledPosition]) -> Result<(f64, Params)> {
        let mut grads = Params::zeros_like(&self.params);
        let mut total = 0.0;
        for ex in examples {
            let act = self.forward(&ex.features)?;
            let (tf, td) = (ex.f0.as_f64(), ex.dur.as_f64());
            total += position_loss(&act, &tf, &td);
            self.backward(&ex.features, &act, &tf, &td, &mut grads);
        }
        Ok((total, grads))
    }

    /// Decoded one-based ranks `(f0, dur)` for one position.
    pub fn predict_ranks(&self, f: &PredictorFeatures) -> Result<(usize, usize)> {
        let act = self.forward(f)?;
        let rule = self.config.decode_rule;
        Ok((
            decode_ordinal(act.f0.as_slice().unwrap(), rule),
            decode_ordinal(act.dur.as_slice().unwrap(), rule),
        ))
    }
}

/// Features with both cumulative targets.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelledPosition {
    pub features: PredictorFeatures,
    pub f0: OrdinalTarget,
    pub dur: OrdinalTarget,
}

/// Binary cross-entropy summed over units, probabilities clamped to `[1e-7, 1 - 1e-7]`.
pub fn loss(probs: &[f64], target: &[f64]) -> f64 {
    probs
        .iter()
        .zip(target)
        .map(|(&p, &t)| {
            let p = p.clamp(P_CLAMP, 1.0 - P_CLAMP);
            -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
        })
        .sum()
}

/// Loss of both heads at one position.
pub fn position_loss(act: &Activations, f0_target: &[f64], dur_target: &[f64]) -> f64 {
    loss(act.f0.as_slice().unwrap(), f0_target) + loss(act.dur.as_slice().unwrap(), dur_target)
}

/// d(loss)/d(logit) = p - t inside the clamp range, zero where the clamp is active.
fn logit_grad(probs: ArrayView1<f64>, target: &[f64]) -> Array1<f64> {
    Array1::from_iter(probs.iter().zip(target).map(|(&p, &t)| {
        if p > P_CLAMP && p < 1.0 - P_CLAMP {
            p - t
        } else {
            0.0
        }
    }))
}

fn outer_add(m: &mut Array2<f64>, a: &Array1<f64>, b: &Array1<f64>) {
    for (mut row, &ai) in m.rows_mut().into_iter().zip(a.iter()) {
        if ai != 0.0 {
            row.scaled_add(ai, b);
        }
    }
}
