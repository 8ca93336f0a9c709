use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{PredictorConfig, PredictorModel};
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Tensor {
    name: String,
    shape: Vec<usize>,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Checkpoint {
    format_version: u32,
    k: usize,
    config: PredictorConfig,
    phonemes: Vec<String>,
    speakers: Vec<String>,
    style_defaults: [f64; 4],
    tensors: Vec<Tensor>,
}

#[derive(Deserialize)]
struct VersionOnly {
    format_version: u32,
}

pub fn checkpoint_json(model: &PredictorModel) -> String {
    let ck = Checkpoint {
        format_version: CHECKPOINT_VERSION,
        k: model.k,
        config: model.config,
        phonemes: model.phonemes.clone(),
        speakers: model.speakers.clone(),
        style_defaults: model.style_defaults,
        tensors: model
            .params
            .groups()
            .into_iter()
            .map(|(name, shape, values)| Tensor {
                name: name.to_string(),
                shape,
                values: values.to_vec(),
            })
            .collect(),
    };
    let mut s = serde_json::to_string(&ck).expect("checkpoint serializes");
    s.push('\n');
    s
}

pub fn write_checkpoint(path: impl AsRef<Path>, model: &PredictorModel) -> Result<()> {
    crate::io::write_atomic(path.as_ref(), checkpoint_json(model).as_bytes())
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<PredictorModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let json = |source| Error::Json {
        path: path.to_path_buf(),
        source,
    };
    let version: VersionOnly = serde_json::from_str(&text).map_err(json)?;
    if version.format_version != CHECKPOINT_VERSION {
        return Err(Error::CheckpointVersion {
            found: version.format_version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let ck: Checkpoint = serde_json::from_str(&text).map_err(json)?;
    let mut model = PredictorModel::new(ck.phonemes, ck.speakers, ck.k, ck.config, 0)?;
    let expected = model.params.groups().into_iter().map(|(n, s, _)| (n, s)).collect::<Vec<_>>();
    if ck.tensors.len() != expected.len() {
        return Err(Error::Dimension(format!(
            "checkpoint has {} tensors, expected {}",
            ck.tensors.len(),
            expected.len()
        )));
    }
    for (t, (name, shape)) in ck.tensors.iter().zip(&expected) {
        let count: usize = t.shape.iter().product();
        if t.name != *name || t.shape != *shape || t.values.len() != count {
            return Err(Error::Dimension(format!(
                "checkpoint tensor {} {:?} does not match expected {name} {shape:?}",
                t.name, t.shape
            )));
        }
    }
    for ((_, dst), t) in model.params.groups_mut().into_iter().zip(&ck.tensors) {
        dst.copy_from_slice(&t.values);
    }
    if !model.params.is_finite() || ck.style_defaults.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("checkpoint values"));
    }
    model.style_defaults = ck.style_defaults;
    Ok(model)
}
