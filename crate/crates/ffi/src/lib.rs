//! C bindings for loading a trained model, extracting features from raw
//! samples and estimating gestational age.
//!
//! Every function returns a [`DgStatus`]; on failure the message for the
//! calling thread is available from [`dg_last_error`] until the next call.
//! Handles are opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use dopplerga::clstm::{load_model, ModelState, NetError};
use dopplerga::features::{FeatureError, FeatureSequence, FEATURE_DIM};
use dopplerga::pipeline::{estimate_sequences, recording_features, PipelineError};
use dopplerga::signal_io::{AudioRecording, SignalError};

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    /// Recording too short for the model input.
    TooShort = 5,
    Internal = 6,
}

/// A trained model.
pub struct DgModel(ModelState);

/// Per-frame features of one recording.
pub struct DgFeatures(FeatureSequence);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Failure(DgStatus, String);

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        let status = match &e {
            PipelineError::Signal(SignalError::MissingFile(_) | SignalError::Io { .. }) | PipelineError::Io { .. } => {
                DgStatus::Io
            }
            PipelineError::Signal(_) => DgStatus::InvalidArgument,
            PipelineError::Feature(FeatureError::RecordingTooShort { .. } | FeatureError::TooFewFrames { .. })
            | PipelineError::Net(NetError::TooFewFrames { .. }) => DgStatus::TooShort,
            PipelineError::Feature(_) => DgStatus::InvalidArgument,
            _ => DgStatus::Internal,
        };
        Failure(status, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> DgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            DgStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            DgStatus::Internal
        }
    }
}

fn null() -> Failure {
    Failure(DgStatus::NullPointer, "null pointer argument".into())
}

unsafe fn samples_to_recording(samples: *const f64, len: usize, sample_rate_hz: u32) -> Result<AudioRecording, Failure> {
    if samples.is_null() {
        return Err(null());
    }
    let data = std::slice::from_raw_parts(samples, len).to_vec();
    AudioRecording::new(data, sample_rate_hz).map_err(|e| Failure(DgStatus::InvalidArgument, e.to_string()))
}

/// Message describing the last failure on this thread (empty after success).
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn dg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a model file written by `dopplerga train`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dg_model_load(path: *const c_char, out: *mut *mut DgModel) -> DgStatus {
    guard(|| {
        if path.is_null() || out.is_null() {
            return Err(null());
        }
        *out = std::ptr::null_mut();
        let p = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| Failure(DgStatus::InvalidArgument, "path is not UTF-8".into()))?;
        let model = load_model(Path::new(p)).map_err(|e| match e {
            NetError::Io { .. } => Failure(DgStatus::Io, e.to_string()),
            other => Failure(DgStatus::Format, other.to_string()),
        })?;
        *out = Box::into_raw(Box::new(DgModel(model)));
        Ok(())
    })
}

/// Feature frames the model consumes (timesteps x width).
///
/// # Safety
/// `model` must be null or a live handle from [`dg_model_load`].
#[no_mangle]
pub unsafe extern "C" fn dg_model_frames_needed(model: *const DgModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.config.frames_needed())
}

/// # Safety
/// `model` must be null or a handle from [`dg_model_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dg_model_free(model: *mut DgModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Band-pass filters, resamples and extracts per-frame features from mono
/// samples at any rate.
///
/// # Safety
/// `samples` must point to `len` doubles and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn dg_features_from_samples(
    samples: *const f64,
    len: usize,
    sample_rate_hz: u32,
    out: *mut *mut DgFeatures,
) -> DgStatus {
    guard(|| {
        if out.is_null() {
            return Err(null());
        }
        *out = std::ptr::null_mut();
        let rec = samples_to_recording(samples, len, sample_rate_hz)?;
        let seq = recording_features(rec)?;
        *out = Box::into_raw(Box::new(DgFeatures(seq)));
        Ok(())
    })
}

/// Number of frames, 0 for a null handle.
///
/// # Safety
/// `features` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dg_features_len(features: *const DgFeatures) -> usize {
    features.as_ref().map_or(0, |f| f.0.len())
}

/// Copies frame `index` as (energy, frequency, squared bandwidth, Q) into
/// `out_values[4]`; `out_valid` receives 0 for silent frames.
///
/// # Safety
/// `features` must be a live handle; `out_values` must hold 4 doubles;
/// `out_valid` may be null.
#[no_mangle]
pub unsafe extern "C" fn dg_features_get(
    features: *const DgFeatures,
    index: usize,
    out_values: *mut f64,
    out_valid: *mut u8,
) -> DgStatus {
    guard(|| {
        let f = features.as_ref().ok_or_else(null)?;
        if out_values.is_null() {
            return Err(null());
        }
        let frame = f.0.frames.get(index).ok_or_else(|| {
            Failure(DgStatus::InvalidArgument, format!("frame {index} out of range ({} frames)", f.0.len()))
        })?;
        std::ptr::copy_nonoverlapping(frame.values().as_ptr(), out_values, FEATURE_DIM);
        if !out_valid.is_null() {
            *out_valid = frame.valid as u8;
        }
        Ok(())
    })
}

/// # Safety
/// `features` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dg_features_free(features: *mut DgFeatures) {
    if !features.is_null() {
        drop(Box::from_raw(features));
    }
}

/// Estimates gestational age in months from precomputed features.
///
/// # Safety
/// Both handles must be live and `out_months` valid.
#[no_mangle]
pub unsafe extern "C" fn dg_estimate_features(
    model: *const DgModel,
    features: *const DgFeatures,
    out_months: *mut f64,
) -> DgStatus {
    guard(|| {
        let (m, f) = (model.as_ref().ok_or_else(null)?, features.as_ref().ok_or_else(null)?);
        if out_months.is_null() {
            return Err(null());
        }
        let need = m.0.config.frames_needed();
        if f.0.len() < need {
            return Err(Failure(DgStatus::TooShort, format!("{} feature frames, the model needs {need}", f.0.len())));
        }
        *out_months = estimate_sequences(&m.0, &[&f.0])?[0];
        Ok(())
    })
}

/// Estimates gestational age in months directly from raw samples.
///
/// # Safety
/// `model` must be live, `samples` must point to `len` doubles and
/// `out_months` must be valid.
#[no_mangle]
pub unsafe extern "C" fn dg_estimate_samples(
    model: *const DgModel,
    samples: *const f64,
    len: usize,
    sample_rate_hz: u32,
    out_months: *mut f64,
) -> DgStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(null)?;
        if out_months.is_null() {
            return Err(null());
        }
        let rec = samples_to_recording(samples, len, sample_rate_hz)?;
        let seq = recording_features(rec)?;
        let need = m.0.config.frames_needed();
        if seq.len() < need {
            return Err(Failure(DgStatus::TooShort, format!("{} feature frames, the model needs {need}", seq.len())));
        }
        *out_months = estimate_sequences(&m.0, &[&seq])?[0];
        Ok(())
    })
}
