//! Binary model files.
//!
//! Layout: 8-byte magic, `u32` format version, `u64` header length, a JSON
//! header (architecture, vocabulary, normalisation statistics, config hash,
//! tensor lengths), then every tensor as little-endian `f32` in
//! [`Parameters::NAMES`] order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::Parameters;
use super::{CnnConfig, CnnError, CnnModel};
use crate::dataset::LabelVocabulary;
use crate::features::NormStats;

pub const MODEL_MAGIC: [u8; 8] = *b"HSAYCNN\0";
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    config: CnnConfig,
    vocabulary: LabelVocabulary,
    norm_stats: NormStats,
    config_hash: String,
    tensors: Vec<(String, usize)>,
}

pub fn model_to_bytes(model: &CnnModel<f32>) -> Vec<u8> {
    let tensors = model.params.tensors();
    let header = Header {
        config: model.config.clone(),
        vocabulary: model.vocabulary.clone(),
        norm_stats: model.norm_stats,
        config_hash: model.config_hash.clone(),
        tensors: Parameters::<f32>::NAMES
            .iter()
            .zip(&tensors)
            .map(|(name, t)| (name.to_string(), t.len()))
            .collect(),
    };
    let json = serde_json::to_vec(&header).expect("header serialises");
    let mut out = Vec::with_capacity(20 + json.len() + 4 * model.params.len());
    out.extend_from_slice(&MODEL_MAGIC);
    out.extend_from_slice(&MODEL_FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for t in tensors {
        for v in t {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<CnnModel<f32>, CnnError> {
    let corrupt = |m: &str| CnnError::CorruptFile(m.to_string());
    if bytes.len() < 20 || bytes[..8] != MODEL_MAGIC {
        return Err(corrupt("bad magic"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != MODEL_FORMAT_VERSION {
        return Err(CnnError::IncompatibleVersion {
            found: version,
            expected: MODEL_FORMAT_VERSION,
        });
    }
    let header_len = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
    let body = &bytes[20..];
    if header_len > body.len() as u64 {
        return Err(corrupt("truncated header"));
    }
    let (json, mut data) = body.split_at(header_len as usize);
    let header: Header = serde_json::from_slice(json).map_err(|e| CnnError::CorruptFile(format!("header: {e}")))?;
    LabelVocabulary::new(header.vocabulary.dataset_id, header.vocabulary.labels().to_vec())
        .map_err(|e| CnnError::CorruptFile(e.to_string()))?;
    if header.config.num_classes != header.vocabulary.class_count() {
        return Err(corrupt("class count does not match vocabulary"));
    }

    let mut params = Parameters::<f32>::zeros(&header.config)?;
    if header.tensors.len() != Parameters::<f32>::NAMES.len() {
        return Err(corrupt("wrong tensor count"));
    }
    for ((slot, (name, len)), expected) in params
        .tensors_mut()
        .into_iter()
        .zip(&header.tensors)
        .zip(Parameters::<f32>::NAMES)
    {
        if name != expected || *len != slot.len() {
            return Err(CnnError::CorruptFile(format!("tensor {name} does not fit the architecture")));
        }
        if data.len() < 4 * len {
            return Err(corrupt("truncated tensor data"));
        }
        let (chunk, rest) = data.split_at(4 * len);
        for (dst, src) in slot.iter_mut().zip(chunk.chunks_exact(4)) {
            *dst = f32::from_le_bytes(src.try_into().unwrap());
        }
        data = rest;
    }
    if !data.is_empty() {
        return Err(corrupt("trailing bytes"));
    }
    Ok(CnnModel {
        config: header.config,
        params,
        norm_stats: header.norm_stats,
        vocabulary: header.vocabulary,
        config_hash: header.config_hash,
    })
}

pub fn save_model(model: &CnnModel<f32>, path: &Path) -> Result<(), CnnError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, model_to_bytes(model))?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<CnnModel<f32>, CnnError> {
    model_from_bytes(&fs::read(path)?)
}
