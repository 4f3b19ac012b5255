use std::io::ErrorKind;
use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::{AudioRecording, SignalError};

/// Reads a RIFF/WAVE file into a normalized mono recording.
///
/// Integer PCM of 8, 16, 24 or 32 bits and 32-bit float are accepted; for
/// multi-channel files only the first channel is kept. Integer samples are
/// divided by the positive full-scale value of their type and clamped to
/// [-1, 1]. The recording id is the file stem.
pub fn load_wav(path: &Path) -> Result<AudioRecording, SignalError> {
    let unsupported = |reason: String| SignalError::UnsupportedFormat { path: path.to_path_buf(), reason };

    let mut reader = match WavReader::open(path) {
        Ok(r) => r,
        Err(hound::Error::IoError(e)) if e.kind() == ErrorKind::NotFound => {
            return Err(SignalError::MissingFile(path.to_path_buf()))
        }
        Err(e) => return Err(unsupported(e.to_string())),
    };
    let spec = reader.spec();
    let channels = spec.channels.max(1) as usize;
    if reader.duration() == 0 {
        return Err(SignalError::EmptyPayload(path.to_path_buf()));
    }

    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, bits @ (8 | 16 | 24 | 32)) => {
            let full_scale = ((1_i64 << (bits - 1)) - 1) as f64;
            reader
                .samples::<i32>()
                .step_by(channels)
                .map(|s| s.map(|v| (v as f64 / full_scale).clamp(-1.0, 1.0)))
                .collect::<Result<_, _>>()
                .map_err(|e| unsupported(format!("truncated or corrupt payload: {e}")))?
        }
        (SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .step_by(channels)
            .map(|s| s.map(|v| v as f64))
            .collect::<Result<Vec<f64>, _>>()
            .map_err(|e| unsupported(format!("truncated or corrupt payload: {e}")))?,
        (format, bits) => return Err(unsupported(format!("{bits}-bit {format:?} samples"))),
    };
    if samples.is_empty() {
        return Err(SignalError::EmptyPayload(path.to_path_buf()));
    }
    if let Some(index) = samples.iter().position(|v| !v.is_finite()) {
        return Err(SignalError::NonFiniteSample { index });
    }
    let samples = samples.into_iter().map(|v| v.clamp(-1.0, 1.0)).collect();

    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(AudioRecording::new(samples, spec.sample_rate)?.with_ids("", "", stem))
}

/// Writes a mono 16-bit PCM file. Samples are clamped to [-1, 1] and scaled
/// by 32767, the inverse of [`load_wav`]'s normalization.
pub fn write_wav_pcm16(path: &Path, rec: &AudioRecording) -> Result<(), SignalError> {
    let io_err = |e: hound::Error| SignalError::Io {
        path: path.to_path_buf(),
        source: match e {
            hound::Error::IoError(io) => io,
            other => std::io::Error::other(other.to_string()),
        },
    };
    let spec = WavSpec {
        channels: 1,
        sample_rate: rec.sample_rate_hz(),
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut writer = WavWriter::create(path, spec).map_err(io_err)?;
    for &s in rec.samples() {
        writer.write_sample((s.clamp(-1.0, 1.0) * 32767.0).round() as i16).map_err(io_err)?;
    }
    writer.finalize().map_err(io_err)
}
