//! On-disk patch cache: a flat file of little-endian `f32` values in
//! `[patch][mel][frame][channel]` order, plus a JSON sidecar naming the
//! patches and the config hash that produced them.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use super::{FeatureError, FeaturePatch};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchCacheMeta {
    pub config_hash: String,
    /// `[mel_bands, frames, channels]`
    pub shape: [usize; 3],
    pub segment_ids: Vec<String>,
    /// Class label per patch, for labeled dataset patches.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
    /// Parent clip per patch, for labeled dataset patches.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clip_ids: Option<Vec<String>>,
}

fn sidecar(path: &Path) -> std::path::PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".json");
    p.into()
}

/// Writes `path` (binary blocks) and `path.json` (sidecar).
pub fn write_patch_cache(
    path: &Path,
    patches: &[FeaturePatch],
    mut meta: PatchCacheMeta,
) -> Result<(), FeatureError> {
    if let Some(first) = patches.first() {
        meta.shape = first.values.dim().into();
    }
    meta.segment_ids = patches.iter().map(|p| p.segment_id.clone()).collect();
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    for p in patches {
        if <[usize; 3]>::from(p.values.dim()) != meta.shape {
            return Err(FeatureError::ShapeMismatch(format!(
                "patch {} has shape {:?}, expected {:?}",
                p.segment_id,
                p.values.dim(),
                meta.shape
            )));
        }
        for v in p.values.iter() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    std::fs::write(sidecar(path), serde_json::to_vec_pretty(&meta)?)?;
    Ok(())
}

pub fn read_patch_cache(path: &Path) -> Result<(Vec<FeaturePatch>, PatchCacheMeta), FeatureError> {
    let meta: PatchCacheMeta = serde_json::from_slice(&std::fs::read(sidecar(path))?)?;
    let per_patch: usize = meta.shape.iter().product();
    let expected = per_patch * meta.segment_ids.len() * 4;
    let actual = std::fs::metadata(path)?.len() as usize;
    if actual != expected {
        return Err(FeatureError::CorruptCache(format!(
            "{} holds {actual} bytes, sidecar implies {expected}",
            path.display()
        )));
    }
    let mut input = BufReader::new(std::fs::File::open(path)?);
    let mut buf = vec![0u8; per_patch * 4];
    let mut patches = Vec::with_capacity(meta.segment_ids.len());
    for id in &meta.segment_ids {
        input.read_exact(&mut buf)?;
        let values: Vec<f32> = buf
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        let values = Array3::from_shape_vec(meta.shape, values)
            .map_err(|e| FeatureError::CorruptCache(e.to_string()))?;
        patches.push(FeaturePatch {
            segment_id: id.clone(),
            values,
        });
    }
    Ok((patches, meta))
}
