//! `DGF1` feature cache: magic, u32 frame count, u32 feature dim, frame-major
//! f64 values, then one validity byte per frame. All little-endian.

use std::path::Path;

use super::{FeatureError, FeatureFrame, FeatureSequence, FEATURE_DIM};

pub const CACHE_MAGIC: &[u8; 4] = b"DGF1";

pub fn encode_feature_cache(seq: &FeatureSequence) -> Vec<u8> {
    let n = seq.frames.len();
    let mut out = Vec::with_capacity(12 + n * (FEATURE_DIM * 8 + 1));
    out.extend_from_slice(CACHE_MAGIC);
    out.extend_from_slice(&(n as u32).to_le_bytes());
    out.extend_from_slice(&(FEATURE_DIM as u32).to_le_bytes());
    for f in &seq.frames {
        for v in f.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.extend(seq.frames.iter().map(|f| f.valid as u8));
    out
}

pub fn decode_feature_cache(bytes: &[u8], recording_id: &str) -> Result<FeatureSequence, FeatureError> {
    let bad = |m: &str| FeatureError::Cache(m.to_string());
    if bytes.len() < 12 || &bytes[..4] != CACHE_MAGIC {
        return Err(bad("missing DGF1 magic"));
    }
    let n = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if dim != FEATURE_DIM {
        return Err(FeatureError::Cache(format!("feature dim {dim}, expected {FEATURE_DIM}")));
    }
    let values_end = 12 + n * dim * 8;
    if bytes.len() != values_end + n {
        return Err(bad("length does not match frame count"));
    }
    let mut frames = Vec::with_capacity(n);
    for j in 0..n {
        let mut v = [0.0; FEATURE_DIM];
        for (i, x) in v.iter_mut().enumerate() {
            let at = 12 + (j * dim + i) * 8;
            *x = f64::from_le_bytes(bytes[at..at + 8].try_into().unwrap());
        }
        let valid = match bytes[values_end + j] {
            0 => false,
            1 => true,
            _ => return Err(bad("validity byte not 0/1")),
        };
        frames.push(FeatureFrame::from_values(v, valid));
    }
    Ok(FeatureSequence { frames, recording_id: recording_id.to_string(), start_offset_samples: 0 })
}

pub fn write_feature_cache(path: &Path, seq: &FeatureSequence) -> Result<(), FeatureError> {
    std::fs::write(path, encode_feature_cache(seq)).map_err(|source| FeatureError::Io { path: path.to_path_buf(), source })
}

pub fn read_feature_cache(path: &Path) -> Result<FeatureSequence, FeatureError> {
    let bytes = std::fs::read(path).map_err(|source| FeatureError::Io { path: path.to_path_buf(), source })?;
    let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    decode_feature_cache(&bytes, &id)
}
