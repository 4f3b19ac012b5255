//! Time-frequency features of 4 kHz filtered Doppler audio.
//!
//! Each 400-sample Hamming-windowed frame yields the vector
//! `(sqrt(E), omega, delta_omega^2, Q)`: the root energy, the first spectral
//! moment (instantaneous frequency, rad/sample), the centralized second
//! moment (instantaneous bandwidth squared) and their ratio, the Q-factor.
//! Frames are taken every 40 samples, which gives a 100 Hz feature stream at
//! 4 kHz. The integrals over `[0, pi]` are evaluated on the one-sided DFT
//! with DC and Nyquist counted once and interior bins twice, so the energy
//! matches the time-domain sum exactly.

mod cache;
mod normalize;
mod spectrum;

pub use cache::{decode_feature_cache, encode_feature_cache, read_feature_cache, write_feature_cache, CACHE_MAGIC};
pub use normalize::{compute_normalization_stats, normalize_features, NormalizationStats};
pub use spectrum::{
    frame_energy, hamming_window, instantaneous_bandwidth_sq, instantaneous_frequency, q_factor, windowed_spectrum,
    SpectrumAnalyzer, BANDWIDTH_EPS, ENERGY_EPS, Q_MAX,
};

use std::path::PathBuf;

use thiserror::Error;

use crate::signal_io::AudioRecording;

pub const FEATURE_DIM: usize = 4;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("window length {0} too short (need at least 2)")]
    WindowTooShort(usize),
    #[error("frame length must be even and at least 2, got {0}")]
    OddLength(usize),
    #[error("frame length {frame} does not match window length {window}")]
    LengthMismatch { frame: usize, window: usize },
    #[error("non-finite input at index {index}")]
    NonFinite { index: usize },
    #[error("degenerate frame: energy below threshold")]
    DegenerateFrame,
    #[error("invalid window configuration: {0}")]
    InvalidConfig(String),
    #[error("recording of {len} samples is shorter than one window of {needed}")]
    RecordingTooShort { len: usize, needed: usize },
    #[error("only {found} valid frames, need at least {needed}")]
    TooFewFrames { found: usize, needed: usize },
    #[error("feature {feature} has zero variance")]
    ZeroVariance { feature: usize },
    #[error("feature cache: {0}")]
    Cache(String),
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowKind {
    Hamming,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowConfig {
    pub length_samples: usize,
    pub hop_samples: usize,
    pub window_kind: WindowKind,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self { length_samples: 400, hop_samples: 40, window_kind: WindowKind::Hamming }
    }
}

impl WindowConfig {
    fn validate(&self) -> Result<(), FeatureError> {
        if self.hop_samples == 0 || self.hop_samples > self.length_samples {
            return Err(FeatureError::InvalidConfig(format!(
                "hop {} must be in 1..={}",
                self.hop_samples, self.length_samples
            )));
        }
        if self.length_samples < 2 || !self.length_samples.is_multiple_of(2) {
            return Err(FeatureError::OddLength(self.length_samples));
        }
        Ok(())
    }

    pub fn weights(&self) -> Result<Vec<f64>, FeatureError> {
        match self.window_kind {
            WindowKind::Hamming => hamming_window(self.length_samples),
        }
    }

    /// `floor((len - N) / hop) + 1`, or zero when shorter than a window.
    pub fn frame_count(&self, signal_len: usize) -> usize {
        if signal_len < self.length_samples {
            0
        } else {
            (signal_len - self.length_samples) / self.hop_samples + 1
        }
    }
}

/// One feature vector. Invalid (silent) frames carry zeros.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FeatureFrame {
    pub rms_energy: f64,
    pub inst_freq: f64,
    pub inst_bandwidth_sq: f64,
    pub q_factor: f64,
    pub valid: bool,
}

impl FeatureFrame {
    pub const INVALID: FeatureFrame =
        FeatureFrame { rms_energy: 0.0, inst_freq: 0.0, inst_bandwidth_sq: 0.0, q_factor: 0.0, valid: false };

    pub fn values(&self) -> [f64; FEATURE_DIM] {
        [self.rms_energy, self.inst_freq, self.inst_bandwidth_sq, self.q_factor]
    }

    pub fn from_values(v: [f64; FEATURE_DIM], valid: bool) -> Self {
        Self { rms_energy: v[0], inst_freq: v[1], inst_bandwidth_sq: v[2], q_factor: v[3], valid }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureSequence {
    pub frames: Vec<FeatureFrame>,
    pub recording_id: String,
    pub start_offset_samples: usize,
}

impl FeatureSequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn valid_count(&self) -> usize {
        self.frames.iter().filter(|f| f.valid).count()
    }
}

/// Features of a single already-windowed spectrum.
pub fn frame_features(spectrum: &[num_complex::Complex64]) -> FeatureFrame {
    let energy = frame_energy(spectrum);
    let Ok(omega) = instantaneous_frequency(spectrum, energy) else {
        return FeatureFrame::INVALID;
    };
    let Ok(bw_sq) = instantaneous_bandwidth_sq(spectrum, omega, energy) else {
        return FeatureFrame::INVALID;
    };
    FeatureFrame {
        rms_energy: energy.sqrt(),
        inst_freq: omega,
        inst_bandwidth_sq: bw_sq,
        q_factor: q_factor(omega, bw_sq),
        valid: true,
    }
}

/// Frame `j` covers samples `[j * hop, j * hop + N)`.
pub fn extract_features(rec: &AudioRecording, cfg: &WindowConfig) -> Result<FeatureSequence, FeatureError> {
    cfg.validate()?;
    let n = cfg.length_samples;
    let samples = rec.samples();
    if samples.len() < n {
        return Err(FeatureError::RecordingTooShort { len: samples.len(), needed: n });
    }
    let window = cfg.weights()?;
    let mut analyzer = SpectrumAnalyzer::new(n)?;
    let frames = (0..cfg.frame_count(samples.len()))
        .map(|j| {
            let start = j * cfg.hop_samples;
            let spectrum = analyzer
                .spectrum(&samples[start..start + n], &window)
                .map_err(|e| match e {
                    FeatureError::NonFinite { index } => FeatureError::NonFinite { index: start + index },
                    other => other,
                })?;
            Ok(frame_features(spectrum))
        })
        .collect::<Result<Vec<_>, FeatureError>>()?;
    Ok(FeatureSequence { frames, recording_id: rec.recording_id.clone(), start_offset_samples: 0 })
}
