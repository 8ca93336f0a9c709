use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::model::{position_loss, style_from_tokens, LabelledPosition, Params, PredictorModel};
use super::ordinal::encode_ordinal;
use crate::clustering::LabelSequence;
use crate::error::{Error, Result};

/// A label sequence together with the speaker who produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingUtterance {
    pub speaker: String,
    pub labels: LabelSequence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Valid,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
        }
    }
}

/// Mean per-position loss (both heads) and exact-token accuracies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub split: Split,
    pub loss: f64,
    pub accuracy_f0: f64,
    pub accuracy_dur: f64,
}

pub fn loss_trace_csv(trace: &[EpochStats]) -> String {
    let mut out = String::from("epoch,split,loss,accuracy_f0,accuracy_dur\n");
    for s in trace {
        writeln!(
            out,
            "{},{},{},{},{}",
            s.epoch,
            s.split.as_str(),
            s.loss,
            s.accuracy_f0,
            s.accuracy_dur
        )
        .unwrap();
    }
    out
}

/// Adam moments with weight decay applied directly to the parameters,
/// independent of the learning rate: `θ -= lr·m̂/(√v̂ + ε) + λ·θ`.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    m: Params,
    v: Params,
    t: i32,
}

impl Adam {
    pub fn new(params: &Params, lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            m: Params::zeros_like(params),
            v: Params::zeros_like(params),
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut Params, grad: &Params) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let (b1, b2, lr, eps, wd) = (self.beta1, self.beta2, self.lr, self.eps, self.weight_decay);
        for ((((_, p), (_, m)), (_, v)), (_, _, g)) in params
            .groups_mut()
            .into_iter()
            .zip(self.m.groups_mut())
            .zip(self.v.groups_mut())
            .zip(grad.groups())
        {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let step = lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
                p[i] -= step + wd * p[i];
            }
        }
    }
}

fn check_utterance(model: &PredictorModel, u: &TrainingUtterance) -> Result<()> {
    let l = &u.labels;
    if l.f0_tokens.len() != l.len() || l.dur_tokens.len() != l.len() {
        return Err(Error::Dimension(format!(
            "utterance {}: token and phone counts differ",
            l.utterance_id
        )));
    }
    if let Some(t) = l.f0_tokens.iter().chain(&l.dur_tokens).find(|&&t| t >= model.k) {
        return Err(Error::OutOfRange(format!(
            "utterance {}: token {t} not below k = {}",
            l.utterance_id, model.k
        )));
    }
    Ok(())
}

/// Token statistics of an utterance scaled by `k`.
pub fn utterance_style(labels: &LabelSequence, k: usize) -> [f64; 4] {
    style_from_tokens(&labels.f0_tokens, &labels.dur_tokens, k)
}

/// Every position of an utterance with its cumulative targets.
pub fn labelled_positions(model: &PredictorModel, u: &TrainingUtterance) -> Result<Vec<LabelledPosition>> {
    check_utterance(model, u)?;
    let l = &u.labels;
    let feats = model.features(&l.phones, &u.speaker, utterance_style(l, model.k))?;
    feats
        .into_iter()
        .enumerate()
        .map(|(i, features)| {
            Ok(LabelledPosition {
                features,
                f0: encode_ordinal(l.f0_tokens[i] + 1, model.k)?,
                dur: encode_ordinal(l.dur_tokens[i] + 1, model.k)?,
            })
        })
        .collect()
}

/// Fresh model whose vocabulary covers every phoneme and speaker in `data`.
pub fn model_for(
    data: &[TrainingUtterance],
    k: usize,
    config: super::PredictorConfig,
    seed: u64,
) -> Result<PredictorModel> {
    let mut phonemes: Vec<String> = data.iter().flat_map(|u| u.labels.phones.iter().cloned()).collect();
    phonemes.sort();
    phonemes.dedup();
    let mut speakers: Vec<String> = data.iter().map(|u| u.speaker.clone()).collect();
    speakers.sort();
    speakers.dedup();
    PredictorModel::new(phonemes, speakers, k, config, seed)
}

/// Indices of the validation utterances, chosen by a seeded shuffle.
fn valid_indices(n: usize, fraction: f64, seed: u64) -> Vec<usize> {
    if n < 5 || fraction <= 0.0 {
        return Vec::new();
    }
    let count = ((n as f64 * fraction).round() as usize).clamp(1, n - 1);
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    idx.shuffle(&mut rng);
    let mut out = idx[..count].to_vec();
    out.sort_unstable();
    out
}

fn evaluate(model: &PredictorModel, data: &[Vec<LabelledPosition>], epoch: usize, split: Split) -> Result<EpochStats> {
    let (mut loss, mut hit_f0, mut hit_dur, mut n) = (0.0, 0usize, 0usize, 0usize);
    let rule = model.config.decode_rule;
    for ex in data.iter().flatten() {
        let act = model.forward(&ex.features)?;
        loss += position_loss(&act, &ex.f0.as_f64(), &ex.dur.as_f64());
        hit_f0 += usize::from(super::decode_ordinal(act.f0.as_slice().unwrap(), rule) == ex.f0.rank());
        hit_dur += usize::from(super::decode_ordinal(act.dur.as_slice().unwrap(), rule) == ex.dur.rank());
        n += 1;
    }
    let n = n.max(1) as f64;
    Ok(EpochStats {
        epoch,
        split,
        loss: loss / n,
        accuracy_f0: hit_f0 as f64 / n,
        accuracy_dur: hit_dur as f64 / n,
    })
}

/// Trains both heads jointly on the summed loss. Epoch 0 of the trace is the
/// untrained model. The input data is only read.
pub fn train(
    mut model: PredictorModel,
    data: &[TrainingUtterance],
    seed: u64,
) -> Result<(PredictorModel, Vec<EpochStats>)> {
    if data.is_empty() || data.iter().all(|u| u.labels.is_empty()) {
        return Err(Error::Empty("predictor training data"));
    }
    let cfg = model.config;
    if cfg.batch == 0 || !(0.0..1.0).contains(&cfg.valid_fraction) || !(cfg.lr >= 0.0) || !(cfg.weight_decay >= 0.0) {
        return Err(Error::InvalidConfig(
            "predictor needs batch >= 1, valid_fraction in [0, 1), lr >= 0, weight_decay >= 0".into(),
        ));
    }
    let valid_idx = valid_indices(data.len(), cfg.valid_fraction, seed);
    let (mut train_set, mut valid_set) = (Vec::new(), Vec::new());
    let mut styles = Vec::new();
    for (i, u) in data.iter().enumerate() {
        let positions = labelled_positions(&model, u)?;
        if valid_idx.binary_search(&i).is_ok() {
            valid_set.push(positions);
        } else {
            styles.push(utterance_style(&u.labels, model.k));
            train_set.push(positions);
        }
    }
    let mut defaults = [0.0; 4];
    for s in &styles {
        for (d, v) in defaults.iter_mut().zip(s) {
            *d += v / styles.len() as f64;
        }
    }
    model.style_defaults = defaults;

    let mut trace = Vec::new();
    let record = |model: &PredictorModel, epoch: usize, trace: &mut Vec<EpochStats>| -> Result<()> {
        trace.push(evaluate(model, &train_set, epoch, Split::Train)?);
        if !valid_set.is_empty() {
            trace.push(evaluate(model, &valid_set, epoch, Split::Valid)?);
        }
        Ok(())
    };
    record(&model, 0, &mut trace)?;

    let mut adam = Adam::new(&model.params, cfg.lr, cfg.weight_decay);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(3);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch) {
            let batch: Vec<LabelledPosition> = chunk.iter().flat_map(|&i| train_set[i].iter().cloned()).collect();
            if batch.is_empty() {
                continue;
            }
            let (_, mut grad) = model.loss_and_gradient(&batch)?;
            grad.scale(1.0 / batch.len() as f64);
            adam.step(&mut model.params, &grad);
        }
        if !model.params.is_finite() {
            return Err(Error::NonFinite("predictor parameters"));
        }
        record(&model, epoch, &mut trace)?;
        log::debug!("epoch {epoch}: {:?}", trace.last());
    }
    Ok((model, trace))
}

/// Forward pass and decoding at every position; tokens are `rank - 1`.
/// `style` defaults to the training-corpus means stored in the model.
pub fn predict_labels<S: AsRef<str>>(
    model: &PredictorModel,
    utterance_id: &str,
    phones: &[S],
    speaker: &str,
    style: Option<[f64; 4]>,
) -> Result<LabelSequence> {
    let feats = model.features(phones, speaker, style.unwrap_or(model.style_defaults))?;
    let mut f0_tokens = Vec::with_capacity(feats.len());
    let mut dur_tokens = Vec::with_capacity(feats.len());
    for f in &feats {
        let (rf, rd) = model.predict_ranks(f)?;
        f0_tokens.push(rf - 1);
        dur_tokens.push(rd - 1);
    }
    Ok(LabelSequence {
        utterance_id: utterance_id.to_string(),
        phones: phones.iter().map(|p| p.as_ref().to_string()).collect(),
        f0_tokens,
        dur_tokens,
    })
}

/// Exact-token accuracy and mean absolute token error over matched positions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelScores {
    pub positions: usize,
    pub accuracy_f0: f64,
    pub accuracy_dur: f64,
    pub mae_f0: f64,
    pub mae_dur: f64,
}

impl LabelScores {
    pub fn accuracy(&self) -> f64 {
        (self.accuracy_f0 + self.accuracy_dur) / 2.0
    }

    pub fn mae(&self) -> f64 {
        (self.mae_f0 + self.mae_dur) / 2.0
    }
}

/// Compares utterances by id. Every predicted utterance must exist in the
/// truth with the same phone sequence.
pub fn score_labels(predicted: &[LabelSequence], truth: &[LabelSequence]) -> Result<LabelScores> {
    let by_id: std::collections::HashMap<&str, &LabelSequence> =
        truth.iter().map(|t| (t.utterance_id.as_str(), t)).collect();
    let (mut n, mut af, mut ad, mut ef, mut ed) = (0usize, 0usize, 0usize, 0usize, 0usize);
    for p in predicted {
        let t = by_id
            .get(p.utterance_id.as_str())
            .ok_or_else(|| Error::UnknownUtterance(p.utterance_id.clone()))?;
        if t.phones != p.phones {
            return Err(Error::StageMismatch(format!(
                "utterance {}: predicted and reference phone sequences differ",
                p.utterance_id
            )));
        }
        for i in 0..p.len() {
            n += 1;
            af += usize::from(p.f0_tokens[i] == t.f0_tokens[i]);
            ad += usize::from(p.dur_tokens[i] == t.dur_tokens[i]);
            ef += p.f0_tokens[i].abs_diff(t.f0_tokens[i]);
            ed += p.dur_tokens[i].abs_diff(t.dur_tokens[i]);
        }
    }
    if n == 0 {
        return Err(Error::Empty("label positions to score"));
    }
    let nf = n as f64;
    Ok(LabelScores {
        positions: n,
        accuracy_f0: af as f64 / nf,
        accuracy_dur: ad as f64 / nf,
        mae_f0: ef as f64 / nf,
        mae_dur: ed as f64 / nf,
    })
}

/// Uniformly random tokens in `0..k` on the same phone sequences.
pub fn random_labels(like: &[LabelSequence], k: usize, seed: u64) -> Vec<LabelSequence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    like.iter()
        .map(|l| LabelSequence {
            utterance_id: l.utterance_id.clone(),
            phones: l.phones.clone(),
            f0_tokens: (0..l.len()).map(|_| rng.gen_range(0..k)).collect(),
            dur_tokens: (0..l.len()).map(|_| rng.gen_range(0..k)).collect(),
        })
        .collect()
}

/// Synthetic corpus whose tokens are a fixed function of the phoneme and
/// speaker, with a fraction `noise` of tokens replaced at random.
pub fn synthetic_rule_corpus(
    utterances: usize,
    phones_per_utt: usize,
    k: usize,
    noise: f64,
    seed: u64,
) -> Vec<TrainingUtterance> {
    let inventory: Vec<String> = (0..12).map(|i| format!("p{i:02}")).collect();
    let speakers = ["spk_a", "spk_b", "spk_c"];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..utterances)
        .map(|u| {
            let s = u % speakers.len();
            let ids: Vec<usize> = (0..phones_per_utt).map(|_| rng.gen_range(0..inventory.len())).collect();
            let mut f0: Vec<usize> = ids.iter().map(|&p| (5 * p + 2 * s) % k).collect();
            let mut dur: Vec<usize> = ids.iter().map(|&p| (7 * p + 3) % k).collect();
            for t in f0.iter_mut().chain(dur.iter_mut()) {
                if rng.gen::<f64>() < noise {
                    *t = rng.gen_range(0..k);
                }
            }
            TrainingUtterance {
                speaker: speakers[s].to_string(),
                labels: LabelSequence {
                    utterance_id: format!("rule_{u:04}"),
                    phones: ids.iter().map(|&p| inventory[p].clone()).collect(),
                    f0_tokens: f0,
                    dur_tokens: dur,
                },
            }
        })
        .collect()
}
