use std::fmt::Write as _;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};

/// Per-phone F0 and duration tokens of one utterance, tokens in `0..k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSequence {
    pub utterance_id: String,
    pub phones: Vec<String>,
    pub f0_tokens: Vec<usize>,
    pub dur_tokens: Vec<usize>,
}

impl LabelSequence {
    pub fn len(&self) -> usize {
        self.phones.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phones.is_empty()
    }
}

#[derive(Deserialize)]
struct Row {
    utterance_id: String,
    position: usize,
    phoneme: String,
    f0_token: usize,
    dur_token: usize,
}

/// `utterance_id,position,phoneme,f0_token,dur_token`, one row per phone.
pub fn write_labels(path: impl AsRef<Path>, labels: &[LabelSequence]) -> Result<()> {
    let mut out = String::from("utterance_id,position,phoneme,f0_token,dur_token\n");
    for seq in labels {
        for i in 0..seq.len() {
            writeln!(
                out,
                "{},{},{},{},{}",
                seq.utterance_id, i, seq.phones[i], seq.f0_tokens[i], seq.dur_tokens[i]
            )
            .unwrap();
        }
    }
    crate::io::write_atomic(path.as_ref(), out.as_bytes())
}

/// Reads a label file. Utterances keep the order of their first row and rows
/// of one utterance must be contiguous with positions `0, 1, 2, ...`.
pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<LabelSequence>> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path).map_err(|source| Error::Csv {
        path: path.to_path_buf(),
        source,
    })?;
    let mut out: Vec<LabelSequence> = Vec::new();
    for (n, row) in reader.deserialize::<Row>().enumerate() {
        let row = row.map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        let start_new = out.last().map_or(true, |s| s.utterance_id != row.utterance_id);
        if start_new {
            if out.iter().any(|s| s.utterance_id == row.utterance_id) {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: n + 2,
                    message: format!("rows of {:?} are not contiguous", row.utterance_id),
                });
            }
            out.push(LabelSequence {
                utterance_id: row.utterance_id.clone(),
                phones: Vec::new(),
                f0_tokens: Vec::new(),
                dur_tokens: Vec::new(),
            });
        }
        let seq = out.last_mut().expect("just pushed");
        if row.position != seq.len() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: n + 2,
                message: format!("expected position {}, got {}", seq.len(), row.position),
            });
        }
        seq.phones.push(row.phoneme);
        seq.f0_tokens.push(row.f0_token);
        seq.dur_tokens.push(row.dur_token);
    }
    Ok(out)
}
