//! Feature-space augmentation: six pitch shifts and six tempo changes, each
//! applied to one twelfth of the corpus.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::alignment::PhonemeProsody;
use crate::error::{Error, Result};
use crate::features::{Corpus, Utterance};

pub const PITCH_SHIFTS: [i32; 6] = [-6, -4, -2, 2, 4, 6];
pub const TEMPO_RATES: [f64; 6] = [0.70, 0.80, 0.90, 1.10, 1.20, 1.30];

/// Suffix appended to augmented utterance and speaker ids.
pub const AUG_SUFFIX: &str = "#aug";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Transform {
    PitchShift { semitones: i32 },
    Tempo { rate: f64 },
}

impl Transform {
    /// The twelve transforms in dealing order: pitch shifts, then tempo changes.
    pub fn all() -> [Transform; 12] {
        let mut out = [Transform::PitchShift { semitones: 0 }; 12];
        for (i, &s) in PITCH_SHIFTS.iter().enumerate() {
            out[i] = Transform::PitchShift { semitones: s };
        }
        for (i, &r) in TEMPO_RATES.iter().enumerate() {
            out[6 + i] = Transform::Tempo { rate: r };
        }
        out
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Transform::PitchShift { .. } => "pitch_shift",
            Transform::Tempo { .. } => "tempo",
        }
    }

    pub fn parameter(&self) -> String {
        match self {
            Transform::PitchShift { semitones } => semitones.to_string(),
            Transform::Tempo { rate } => format!("{rate:.2}"),
        }
    }
}

/// How a tempo `rate` maps onto phone durations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateSemantics {
    /// `rate` is a speaking-rate multiplier: durations are divided by it.
    #[default]
    SpeakingRate,
    /// `rate` multiplies durations directly.
    DurationFactor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentPlan {
    pub assignments: BTreeMap<String, Transform>,
    pub seed: u64,
}

/// Shuffles the ids with `seed` and deals them round-robin over the twelve transforms.
pub fn make_plan<S: AsRef<str>>(utterance_ids: &[S], seed: u64) -> Result<AugmentPlan> {
    if utterance_ids.is_empty() {
        return Err(Error::Empty("utterance id list"));
    }
    let mut ids: Vec<&str> = utterance_ids.iter().map(AsRef::as_ref).collect();
    ids.sort_unstable();
    ids.dedup();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let transforms = Transform::all();
    let assignments = ids
        .into_iter()
        .enumerate()
        .map(|(i, id)| (id.to_string(), transforms[i % transforms.len()]))
        .collect();
    Ok(AugmentPlan { assignments, seed })
}

impl AugmentPlan {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("utterance_id,transform_kind,parameter\n");
        for (id, t) in &self.assignments {
            writeln!(out, "{id},{},{}", t.kind(), t.parameter()).unwrap();
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::io::write_atomic(path.as_ref(), self.to_csv().as_bytes())
    }

    /// Count of utterances per transform, in [`Transform::all`] order.
    pub fn counts(&self) -> [usize; 12] {
        let all = Transform::all();
        let mut counts = [0; 12];
        for t in self.assignments.values() {
            if let Some(i) = all.iter().position(|a| a == t) {
                counts[i] += 1;
            }
        }
        counts
    }
}

pub fn apply_pitch_shift(records: &[PhonemeProsody], semitones: i32) -> Vec<PhonemeProsody> {
    let delta = semitones as f64 * std::f64::consts::LN_2 / 12.0;
    records
        .iter()
        .map(|r| PhonemeProsody {
            mean_log_f0: r.mean_log_f0 + delta,
            ..r.clone()
        })
        .collect()
}

pub fn apply_tempo(
    records: &[PhonemeProsody],
    rate: f64,
    semantics: RateSemantics,
) -> Result<Vec<PhonemeProsody>> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(Error::OutOfRange(format!("tempo rate must be positive, got {rate}")));
    }
    let factor = match semantics {
        RateSemantics::SpeakingRate => 1.0 / rate,
        RateSemantics::DurationFactor => rate,
    };
    Ok(records
        .iter()
        .map(|r| PhonemeProsody {
            duration: r.duration * factor,
            ..r.clone()
        })
        .collect())
}

pub fn apply(records: &[PhonemeProsody], t: Transform, semantics: RateSemantics) -> Result<Vec<PhonemeProsody>> {
    match t {
        Transform::PitchShift { semitones } => Ok(apply_pitch_shift(records, semitones)),
        Transform::Tempo { rate } => apply_tempo(records, rate, semantics),
    }
}

/// Original corpus plus one transformed copy per utterance, with `#aug`
/// appended to the copy's utterance and speaker ids.
pub fn augment_corpus(corpus: &Corpus, plan: &AugmentPlan, semantics: RateSemantics) -> Result<Corpus> {
    let corpus_ids: BTreeSet<&String> = corpus.keys().collect();
    let plan_ids: BTreeSet<&String> = plan.assignments.keys().collect();
    if corpus_ids != plan_ids {
        let missing: Vec<_> = corpus_ids.difference(&plan_ids).take(3).collect();
        let extra: Vec<_> = plan_ids.difference(&corpus_ids).take(3).collect();
        return Err(Error::StageMismatch(format!(
            "plan does not cover the corpus (unplanned: {missing:?}, unknown: {extra:?})"
        )));
    }
    let mut out = corpus.clone();
    for (id, utt) in corpus {
        let copy = Utterance {
            id: format!("{id}{AUG_SUFFIX}"),
            speaker: format!("{}{AUG_SUFFIX}", utt.speaker),
            phones: apply(&utt.phones, plan.assignments[id], semantics)?,
        };
        if out.insert(copy.id.clone(), copy).is_some() {
            return Err(Error::StageMismatch(format!(
                "corpus already contains {id}{AUG_SUFFIX}"
            )));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(f0_hz: f64, duration: f64) -> PhonemeProsody {
        PhonemeProsody {
            label: "AA".into(),
            mean_log_f0: f0_hz.ln(),
            duration,
        }
    }

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("utt{i:03}")).collect()
    }

    fn corpus(n: usize) -> Corpus {
        ids(n)
            .into_iter()
            .enumerate()
            .map(|(i, id)| {
                let u = Utterance {
                    id: id.clone(),
                    speaker: format!("spk{}", i % 3),
                    phones: vec![rec(100.0 + i as f64, 0.05 + 0.001 * i as f64), rec(150.0, 0.1)],
                };
                (id, u)
            })
            .collect()
    }

    #[test]
    fn the_twelve_transforms() {
        let all = Transform::all();
        assert_eq!(all.len(), 12);
        let shifts: Vec<i32> = all
            .iter()
            .filter_map(|t| match t {
                Transform::PitchShift { semitones } => Some(*semitones),
                _ => None,
            })
            .collect();
        assert_eq!(shifts, vec![-6, -4, -2, 2, 4, 6]);
        let rates: Vec<f64> = all
            .iter()
            .filter_map(|t| match t {
                Transform::Tempo { rate } => Some(*rate),
                _ => None,
            })
            .collect();
        assert_eq!(rates, vec![0.70, 0.80, 0.90, 1.10, 1.20, 1.30]);
    }

    #[test]
    fn plan_sizes() {
        assert_eq!(make_plan(&ids(24), 1).unwrap().counts(), [2; 12]);
        let mut c = make_plan(&ids(13), 1).unwrap().counts();
        c.sort_unstable();
        assert_eq!(c[11], 2);
        assert!(c[..11].iter().all(|&x| x == 1));
        assert!(matches!(make_plan::<String>(&[], 1), Err(Error::Empty(_))));
    }

    #[test]
    fn plan_is_deterministic() {
        let a = make_plan(&ids(50), 9).unwrap();
        let b = make_plan(&ids(50), 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_csv(), b.to_csv());
        let mut reversed = ids(50);
        reversed.reverse();
        assert_eq!(make_plan(&reversed, 9).unwrap(), a);
        assert_ne!(make_plan(&ids(50), 10).unwrap(), a);
    }

    #[test]
    fn pitch_shift_values() {
        let r = vec![rec(200.0, 0.1)];
        let up = apply_pitch_shift(&r, 6);
        assert!((up[0].mean_log_f0 - r[0].mean_log_f0 - 0.34657359027997264).abs() < 1e-12);
        assert!((up[0].mean_log_f0.exp() - 282.842712474619).abs() < 1e-9);
        assert_eq!(apply_pitch_shift(&r, 0), r);
        let back = apply_pitch_shift(&up, -6);
        assert!((back[0].mean_log_f0 - r[0].mean_log_f0).abs() < 1e-12);
        assert_eq!(up[0].duration, r[0].duration);
    }

    #[test]
    fn tempo_values() {
        let r = vec![rec(200.0, 0.1)];
        assert_eq!(apply_tempo(&r, 1.0, RateSemantics::SpeakingRate).unwrap(), r);
        let fast = apply_tempo(&r, 2.0, RateSemantics::SpeakingRate).unwrap();
        assert!((fast[0].duration - 0.05).abs() < 1e-15);
        let slow = apply_tempo(&r, 0.5, RateSemantics::SpeakingRate).unwrap();
        assert!((slow[0].duration - 0.2).abs() < 1e-15);
        let scaled = apply_tempo(&r, 0.5, RateSemantics::DurationFactor).unwrap();
        assert!((scaled[0].duration - 0.05).abs() < 1e-15);
        assert_eq!(fast[0].mean_log_f0, r[0].mean_log_f0);
        assert!(apply_tempo(&r, 0.0, RateSemantics::SpeakingRate).is_err());
        assert!(apply_tempo(&r, -1.0, RateSemantics::SpeakingRate).is_err());
    }

    #[test]
    fn corpus_doubles() {
        let c = corpus(50);
        let plan = make_plan(&c.keys().cloned().collect::<Vec<_>>(), 3).unwrap();
        let aug = augment_corpus(&c, &plan, RateSemantics::SpeakingRate).unwrap();
        assert_eq!(aug.len(), 100);
        for (id, t) in &plan.assignments {
            let copy = &aug[&format!("{id}#aug")];
            assert_eq!(copy.speaker, format!("{}#aug", c[id].speaker));
            if let Transform::PitchShift { .. } = t {
                let d0: Vec<f64> = c[id].phones.iter().map(|p| p.duration).collect();
                let d1: Vec<f64> = copy.phones.iter().map(|p| p.duration).collect();
                assert_eq!(d0, d1);
            }
        }
    }

    #[test]
    fn corpus_plan_mismatch() {
        let c = corpus(5);
        let plan = make_plan(&ids(6), 3).unwrap();
        assert!(matches!(
            augment_corpus(&c, &plan, RateSemantics::SpeakingRate),
            Err(Error::StageMismatch(_))
        ));
    }

    #[test]
    fn plan_csv_layout() {
        let plan = make_plan(&ids(12), 0).unwrap();
        let csv = plan.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("utterance_id,transform_kind,parameter"));
        let rows: Vec<&str> = lines.collect();
        assert_eq!(rows.len(), 12);
        assert!(rows.iter().any(|r| r.ends_with(",tempo,0.70")));
        assert!(rows.iter().any(|r| r.ends_with(",pitch_shift,-6")));
    }

    proptest::proptest! {
        #[test]
        fn each_cycle_uses_every_transform_once(n in 1usize..80, seed in 0u64..50) {
            let counts = make_plan(&ids(n), seed).unwrap().counts();
            let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
            proptest::prop_assert!(hi - lo <= 1);
            proptest::prop_assert_eq!(counts.iter().sum::<usize>(), n);
            proptest::prop_assert_eq!(*lo, n / 12);
        }

        #[test]
        fn shift_and_tempo_commute(semitones in -12i32..12, rate in 0.5f64..2.0, f0 in 60.0f64..400.0, d in 0.01f64..0.3) {
            let r = vec![rec(f0, d)];
            let a = apply_tempo(&apply_pitch_shift(&r, semitones), rate, RateSemantics::SpeakingRate).unwrap();
            let b = apply_pitch_shift(&apply_tempo(&r, rate, RateSemantics::SpeakingRate).unwrap(), semitones);
            proptest::prop_assert_eq!(a, b);
        }

        #[test]
        fn augmentation_never_narrows_f0_range(seed in 0u64..200) {
            let c = corpus(30);
            let plan = make_plan(&c.keys().cloned().collect::<Vec<_>>(), seed).unwrap();
            let aug = augment_corpus(&c, &plan, RateSemantics::SpeakingRate).unwrap();
            let range = |c: &Corpus| {
                let v: Vec<f64> = c.values().flat_map(|u| u.phones.iter().map(|p| p.mean_log_f0)).collect();
                v.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - v.iter().cloned().fold(f64::INFINITY, f64::min)
            };
            proptest::prop_assert!(range(&aug) >= range(&c));
        }
    }
}
