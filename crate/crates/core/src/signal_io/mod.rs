//! Loading, conditioning and band-pass filtering of raw Doppler audio, plus
//! the dataset manifest format.
//!
//! The canonical preprocessing chain is
//! `load_wav -> truncate_to_duration(300 s) -> resample(4000 Hz) -> apply_filter(25..600 Hz)`.

mod filter;
mod manifest;
mod resample;
mod wav;

pub use filter::{apply_filter, design_bandpass_butterworth, BiquadSection, FilterCascade};
pub use manifest::{load_manifest, parse_manifest, write_manifest, DatasetManifest, ManifestEntry};
pub use resample::{resample, MIN_TARGET_RATE_HZ};
pub use wav::{load_wav, write_wav_pcm16};

use std::path::PathBuf;

use thiserror::Error;

/// Rate at which features are computed.
pub const CANONICAL_RATE_HZ: u32 = 4000;
/// Recordings are cut to their first five minutes.
pub const MAX_DURATION_S: f64 = 300.0;
/// Band-pass cutoffs covering cardiac oscillations.
pub const BAND_LOW_HZ: f64 = 25.0;
pub const BAND_HIGH_HZ: f64 = 600.0;

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("file not found: {0}")]
    MissingFile(PathBuf),
    #[error("unsupported format in {path}: {reason}")]
    UnsupportedFormat { path: PathBuf, reason: String },
    #[error("empty audio payload in {0}")]
    EmptyPayload(PathBuf),
    #[error("recording has no samples")]
    EmptyRecording,
    #[error("non-finite sample at index {index}")]
    NonFiniteSample { index: usize },
    #[error("sample rate must be positive")]
    InvalidSampleRate,
    #[error("target rate {target_hz} Hz would alias the 25-600 Hz band (minimum {min_hz} Hz)")]
    AliasingTargetRate { target_hz: u32, min_hz: u32 },
    #[error("invalid band-pass design: {0}")]
    InvalidDesign(String),
    #[error("unstable filter section {0}")]
    UnstableSection(usize),
    #[error("manifest line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("manifest line {line}: gestational age {value} outside 5..9 months")]
    GaOutOfRange { line: usize, value: i64 },
    #[error("manifest line {line}: duplicate entry ({patient_id}, {visit_id}, {path})")]
    DuplicateEntry { line: usize, patient_id: String, visit_id: String, path: String },
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

/// A sampled 1D Doppler time series with its patient/visit identity.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioRecording {
    samples: Vec<f64>,
    sample_rate_hz: u32,
    pub patient_id: String,
    pub visit_id: String,
    pub recording_id: String,
}

impl AudioRecording {
    /// Builds a recording, rejecting empty or non-finite payloads.
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Result<Self, SignalError> {
        if sample_rate_hz == 0 {
            return Err(SignalError::InvalidSampleRate);
        }
        if samples.is_empty() {
            return Err(SignalError::EmptyRecording);
        }
        if let Some(index) = samples.iter().position(|v| !v.is_finite()) {
            return Err(SignalError::NonFiniteSample { index });
        }
        Ok(Self {
            samples,
            sample_rate_hz,
            patient_id: String::new(),
            visit_id: String::new(),
            recording_id: String::new(),
        })
    }

    pub fn with_ids(
        mut self,
        patient_id: impl Into<String>,
        visit_id: impl Into<String>,
        recording_id: impl Into<String>,
    ) -> Self {
        self.patient_id = patient_id.into();
        self.visit_id = visit_id.into();
        self.recording_id = recording_id.into();
        self
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    /// Same identity, new payload. Used by the transforms below.
    fn replace_samples(&self, samples: Vec<f64>, sample_rate_hz: u32) -> Self {
        Self {
            samples,
            sample_rate_hz,
            patient_id: self.patient_id.clone(),
            visit_id: self.visit_id.clone(),
            recording_id: self.recording_id.clone(),
        }
    }
}

/// Keeps the first `round(seconds * rate)` samples (at least one).
pub fn truncate_to_duration(mut rec: AudioRecording, seconds: f64) -> AudioRecording {
    let limit = (seconds * rec.sample_rate_hz as f64).round().max(1.0);
    let keep = if limit >= rec.samples.len() as f64 { rec.samples.len() } else { limit as usize };
    rec.samples.truncate(keep);
    rec
}

/// Runs the canonical chain on an already loaded recording:
/// truncate to five minutes, resample to 4 kHz, band-pass 25..600 Hz.
pub fn preprocess(rec: AudioRecording) -> Result<AudioRecording, SignalError> {
    let rec = truncate_to_duration(rec, MAX_DURATION_S);
    let rec = resample(&rec, CANONICAL_RATE_HZ)?;
    let cascade = design_bandpass_butterworth(BAND_LOW_HZ, BAND_HIGH_HZ, CANONICAL_RATE_HZ as f64)?;
    apply_filter(&cascade, &rec)
}
