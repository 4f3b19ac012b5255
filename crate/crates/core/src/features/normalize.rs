use super::{FeatureError, FeatureFrame, FeatureSequence, FEATURE_DIM};

/// Per-feature z-scoring statistics fitted on valid training frames.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationStats {
    pub mean: [f64; FEATURE_DIM],
    pub std: [f64; FEATURE_DIM],
}

impl NormalizationStats {
    /// Identity transform; used for freshly initialized models.
    pub const IDENTITY: NormalizationStats = NormalizationStats { mean: [0.0; FEATURE_DIM], std: [1.0; FEATURE_DIM] };

    pub fn denormalize(&self, frame: &FeatureFrame) -> FeatureFrame {
        if !frame.valid {
            return *frame;
        }
        let mut v = frame.values();
        for (i, x) in v.iter_mut().enumerate() {
            *x = *x * self.std[i] + self.mean[i];
        }
        FeatureFrame::from_values(v, true)
    }
}

/// Mean and sample standard deviation (denominator `count - 1`) of each
/// feature over all valid frames.
///
/// Needs at least two valid frames; a feature with zero spread is an error.
pub fn compute_normalization_stats(sequences: &[FeatureSequence]) -> Result<NormalizationStats, FeatureError> {
    let valid = || sequences.iter().flat_map(|s| s.frames.iter()).filter(|f| f.valid);
    let count = valid().count();
    if count < 2 {
        return Err(FeatureError::TooFewFrames { found: count, needed: 2 });
    }
    let mut mean = [0.0; FEATURE_DIM];
    for f in valid() {
        for (m, v) in mean.iter_mut().zip(f.values()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= count as f64);

    let mut var = [0.0; FEATURE_DIM];
    for f in valid() {
        for ((acc, v), m) in var.iter_mut().zip(f.values()).zip(mean) {
            *acc += (v - m) * (v - m);
        }
    }
    let mut std = [0.0; FEATURE_DIM];
    for (i, (s, v)) in std.iter_mut().zip(var).enumerate() {
        *s = (v / (count - 1) as f64).sqrt();
        if !(*s > 0.0) {
            return Err(FeatureError::ZeroVariance { feature: i });
        }
    }
    Ok(NormalizationStats { mean, std })
}

/// Z-scores valid frames; invalid frames become zero vectors and keep their flag.
pub fn normalize_features(seq: &FeatureSequence, stats: &NormalizationStats) -> FeatureSequence {
    let frames = seq
        .frames
        .iter()
        .map(|f| {
            if !f.valid {
                return FeatureFrame::INVALID;
            }
            let mut v = f.values();
            for (i, x) in v.iter_mut().enumerate() {
                *x = (*x - stats.mean[i]) / stats.std[i];
            }
            FeatureFrame::from_values(v, true)
        })
        .collect();
    FeatureSequence { frames, recording_id: seq.recording_id.clone(), start_offset_samples: seq.start_offset_samples }
}
