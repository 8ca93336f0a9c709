//! Utterance-level containers for phoneme prosody and their CSV files.
//!
//! A feature file holds one utterance, one phone per row:
//! `utterance_id,speaker_id,phoneme,mean_log_f0,duration`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::alignment::PhonemeProsody;
use crate::error::{Error, Result};

pub const FEATURE_EXTENSION: &str = "prosody.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub id: String,
    pub speaker: String,
    pub phones: Vec<PhonemeProsody>,
}

/// Utterances keyed by id.
pub type Corpus = BTreeMap<String, Utterance>;

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    utterance_id: String,
    speaker_id: String,
    phoneme: String,
    mean_log_f0: f64,
    duration: f64,
}

impl Utterance {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("utterance_id,speaker_id,phoneme,mean_log_f0,duration\n");
        for p in &self.phones {
            writeln!(
                out,
                "{},{},{},{},{}",
                self.id, self.speaker, p.label, p.mean_log_f0, p.duration
            )
            .unwrap();
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::io::write_atomic(path.as_ref(), self.to_csv().as_bytes())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut reader = csv::Reader::from_path(path).map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        let mut utt: Option<Utterance> = None;
        for (n, row) in reader.deserialize::<Row>().enumerate() {
            let row = row.map_err(|source| Error::Csv {
                path: path.to_path_buf(),
                source,
            })?;
            let u = utt.get_or_insert_with(|| Utterance {
                id: row.utterance_id.clone(),
                speaker: row.speaker_id.clone(),
                phones: Vec::new(),
            });
            if u.id != row.utterance_id || u.speaker != row.speaker_id {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: n + 2,
                    message: "a feature file must hold a single utterance of a single speaker".into(),
                });
            }
            u.phones.push(PhonemeProsody {
                label: row.phoneme,
                mean_log_f0: row.mean_log_f0,
                duration: row.duration,
            });
        }
        utt.ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: "feature file has no phones".into(),
        })
    }
}

/// File name used for an utterance's features.
pub fn feature_file_name(utterance_id: &str) -> String {
    format!("{utterance_id}.{FEATURE_EXTENSION}")
}

pub fn read_corpus(dir: impl AsRef<Path>) -> Result<Corpus> {
    let dir = dir.as_ref();
    let mut paths = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let is_feature = path
            .file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n.ends_with(&format!(".{FEATURE_EXTENSION}")));
        if is_feature {
            paths.push(path);
        }
    }
    paths.sort();
    let mut corpus = Corpus::new();
    for path in paths {
        let utt = Utterance::read(&path)?;
        if corpus.contains_key(&utt.id) {
            return Err(Error::Parse {
                path,
                line: 2,
                message: format!("duplicate utterance id {:?}", utt.id),
            });
        }
        corpus.insert(utt.id.clone(), utt);
    }
    Ok(corpus)
}

pub fn write_corpus(dir: impl AsRef<Path>, corpus: &Corpus) -> Result<()> {
    let dir = dir.as_ref();
    for utt in corpus.values() {
        utt.write(dir.join(feature_file_name(&utt.id)))?;
    }
    Ok(())
}

/// Mean log-F0 values of every phone, grouped by speaker.
pub fn f0_by_speaker(corpus: &Corpus) -> BTreeMap<String, Vec<f64>> {
    let mut out: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for utt in corpus.values() {
        out.entry(utt.speaker.clone())
            .or_default()
            .extend(utt.phones.iter().map(|p| p.mean_log_f0));
    }
    out
}
