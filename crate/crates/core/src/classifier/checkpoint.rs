//! `SKM1` checkpoints: magic, u32 version, u32-length JSON header, then every
//! parameter tensor in layout order as little-endian f64.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ClassifierConfig;
use super::model::{param_layout, ClassifierModel, ParamSet, TensorSpec};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SKM1";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub classifier: ClassifierConfig,
    pub rows: usize,
    pub cols: usize,
    pub labels: Vec<String>,
    pub feature_hash: String,
    pub tensors: Vec<TensorSpec>,
}

pub fn encode_checkpoint<T: Scalar>(model: &ClassifierModel<T>) -> Vec<u8> {
    let (rows, cols) = model.input_shape();
    let header = CheckpointHeader {
        classifier: model.config.clone(),
        rows,
        cols,
        labels: model.labels.clone(),
        feature_hash: model.feature_hash.clone(),
        tensors: model.params().layout().to_vec(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut buf = Vec::with_capacity(12 + json.len() + 8 * model.params().len());
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&json);
    for v in model.params().values() {
        buf.extend_from_slice(&v.as_f64().to_le_bytes());
    }
    buf
}

pub fn decode_checkpoint<T: Scalar>(bytes: &[u8]) -> Result<ClassifierModel<T>> {
    if bytes.len() < 12 || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(Error::Format("missing SKM1 header".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
    let version = word(4);
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let hlen = word(8) as usize;
    let body = bytes.get(12..12 + hlen).ok_or_else(|| Error::Format("truncated checkpoint header".into()))?;
    let header: CheckpointHeader = serde_json::from_slice(body)?;
    let layout = param_layout(&header.classifier, header.cols);
    let declared: Vec<(&str, &[usize])> = header.tensors.iter().map(|t| (t.name.as_str(), t.shape.as_slice())).collect();
    let expected: Vec<(&str, &[usize])> = layout.iter().map(|t| (t.name.as_str(), t.shape.as_slice())).collect();
    if declared != expected {
        return Err(Error::Format("tensor list does not match the classifier configuration".into()));
    }
    let payload = &bytes[12 + hlen..];
    let n = layout.last().map_or(0, |t| t.offset + t.len());
    if payload.len() != 8 * n {
        return Err(Error::Format(format!("expected {n} parameters, payload holds {} bytes", payload.len())));
    }
    let values = payload.chunks_exact(8).map(|c| T::of(f64::from_le_bytes(c.try_into().expect("8 bytes")))).collect();
    let mut model =
        ClassifierModel::from_params(header.classifier, header.rows, header.cols, ParamSet::from_values(layout, values)?)?;
    model.labels = header.labels;
    model.feature_hash = header.feature_hash;
    Ok(model)
}

pub fn save_checkpoint<T: Scalar>(model: &ClassifierModel<T>, path: &Path) -> Result<()> {
    crate::descriptor::write_atomic(path, &encode_checkpoint(model))
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<ClassifierModel<T>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes).map_err(|e| e.at_entry(path))
}
