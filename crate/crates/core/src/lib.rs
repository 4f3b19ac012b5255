//! Gestational-age estimation from one-dimensional Doppler ultrasound.
//!
//! The crate is organized along the processing chain:
//!
//! * [`signal_io`] loads WAV audio, resamples to 4 kHz and band-pass filters it.
//! * [`features`] turns filtered audio into a 100 Hz stream of spectral-moment
//!   features (energy, instantaneous frequency, bandwidth, Q-factor).
//! * [`clstm`] is a small dense-tensor network core: convolutional LSTM layers,
//!   batch normalization, dropout and a dense regression head, with
//!   hand-written reverse-mode gradients.
//! * [`training`] holds the optimizer, balanced batching, patient-level
//!   stratified cross-validation and multi-trial reporting.
//! * [`synth`] generates labeled synthetic recordings with a known,
//!   gestational-age-dependent heart rhythm.
//! * [`pipeline`] glues these into the end-to-end recording-to-estimate path
//!   shared by the CLI and the C bindings.

// NaN-rejecting range checks are written as negated comparisons.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod signal_io;
pub mod features;
pub mod clstm;
pub mod training;
pub mod synth;
pub mod pipeline;
