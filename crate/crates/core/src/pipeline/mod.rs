//! Recording-to-estimate path shared by the CLI and the C bindings, plus the
//! content-hashed feature cache layout used by the batch commands.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::clstm::{predict, shape_input, stack_batch, ModelState, NetError};
use crate::features::{
    decode_feature_cache, encode_feature_cache, extract_features, normalize_features, FeatureError, FeatureSequence,
    WindowConfig,
};
use crate::signal_io::{load_wav, preprocess, AudioRecording, DatasetManifest, ManifestEntry, SignalError};
use crate::training::{LabeledExample, TrainError};

/// Bumped whenever preprocessing or feature extraction changes output.
pub const FEATURE_PIPELINE_VERSION: u32 = 1;
pub const CACHE_EXTENSION: &str = "dgf";
pub const HASH_EXTENSION: &str = "dgf.sha256";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

/// Preprocessing and feature extraction for one loaded recording.
pub fn recording_features(rec: AudioRecording) -> Result<FeatureSequence, PipelineError> {
    let id = rec.recording_id.clone();
    let filtered = preprocess(rec)?;
    let mut seq = extract_features(&filtered, &WindowConfig::default())?;
    seq.recording_id = id;
    Ok(seq)
}

pub fn wav_features(path: &Path) -> Result<FeatureSequence, PipelineError> {
    recording_features(load_wav(path)?)
}

/// GA estimate (months) for each sequence; shorter sequences than one
/// network input are an error.
pub fn estimate_sequences(model: &ModelState, seqs: &[&FeatureSequence]) -> Result<Vec<f64>, PipelineError> {
    let inputs = seqs
        .iter()
        .map(|s| shape_input(&normalize_features(s, &model.norm_stats), &model.config))
        .collect::<Result<Vec<_>, _>>()?;
    let mut out = Vec::with_capacity(inputs.len());
    for chunk in inputs.chunks(32) {
        let refs: Vec<_> = chunk.iter().collect();
        out.extend(predict(&stack_batch(&refs)?, model)?);
    }
    Ok(out)
}

pub fn estimate_recording(model: &ModelState, rec: AudioRecording) -> Result<f64, PipelineError> {
    let seq = recording_features(rec)?;
    Ok(estimate_sequences(model, &[&seq])?[0])
}

/// Cache file for a manifest entry: `<patient>__<visit>__<file stem>.dgf`.
pub fn cache_path(cache_dir: &Path, entry: &ManifestEntry) -> PathBuf {
    let stem = Path::new(&entry.file_path).file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    cache_dir.join(format!("{}__{}__{stem}.{CACHE_EXTENSION}", entry.patient_id, entry.visit_id))
}

pub fn hash_path(cache: &Path) -> PathBuf {
    cache.with_extension(HASH_EXTENSION)
}

/// SHA-256 over the pipeline version and the raw audio file bytes.
pub fn content_hash(audio_bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(b"dopplerga-features");
    h.update(FEATURE_PIPELINE_VERSION.to_le_bytes());
    h.update(audio_bytes);
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheStatus {
    Written,
    UpToDate,
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.to_path_buf(), source }
}

fn read_audio(path: &Path) -> Result<Vec<u8>, PipelineError> {
    std::fs::read(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            PipelineError::Signal(SignalError::MissingFile(path.to_path_buf()))
        } else {
            PipelineError::Io { path: path.to_path_buf(), source: e }
        }
    })
}

/// Computes (or confirms) the cache for one manifest entry. The cache is
/// rebuilt whenever the stored hash differs from the audio's content hash.
pub fn update_cache(manifest: &DatasetManifest, entry: &ManifestEntry, cache_dir: &Path) -> Result<CacheStatus, PipelineError> {
    let audio_path = manifest.resolve(entry);
    let bytes = read_audio(&audio_path)?;
    let hash = content_hash(&bytes);
    let cache = cache_path(cache_dir, entry);
    let sidecar = hash_path(&cache);
    if cache.exists() && std::fs::read_to_string(&sidecar).is_ok_and(|h| h.trim() == hash) {
        return Ok(CacheStatus::UpToDate);
    }
    let seq = wav_features(&audio_path)?;
    std::fs::write(&cache, encode_feature_cache(&seq)).map_err(io(&cache))?;
    std::fs::write(&sidecar, format!("{hash}\n")).map_err(io(&sidecar))?;
    Ok(CacheStatus::Written)
}

/// Labeled examples for every manifest entry, read from the cache directory.
pub fn load_examples(manifest: &DatasetManifest, cache_dir: &Path) -> Result<Vec<LabeledExample>, PipelineError> {
    manifest
        .entries
        .iter()
        .map(|e| {
            let path = cache_path(cache_dir, e);
            let bytes = std::fs::read(&path).map_err(io(&path))?;
            let stem = Path::new(&e.file_path).file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            Ok(LabeledExample {
                patient_id: e.patient_id.clone(),
                visit_id: e.visit_id.clone(),
                recording_id: stem.clone(),
                ga_months: e.ga_months_lmp,
                features: Arc::new(decode_feature_cache(&bytes, &stem)?),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_depends_on_content() {
        assert_eq!(content_hash(b"abc"), content_hash(b"abc"));
        assert_ne!(content_hash(b"abc"), content_hash(b"abd"));
        assert_eq!(content_hash(b"").len(), 64);
    }

    #[test]
    fn cache_names() {
        let e = ManifestEntry {
            file_path: "audio/P0001_V1_R2.wav".into(),
            patient_id: "P0001".into(),
            visit_id: "V1".into(),
            ga_months_lmp: 7,
        };
        let p = cache_path(Path::new("/c"), &e);
        assert_eq!(p, Path::new("/c/P0001__V1__P0001_V1_R2.dgf"));
        assert_eq!(hash_path(&p), Path::new("/c/P0001__V1__P0001_V1_R2.dgf.sha256"));
    }
}
