//! Time-domain signal helpers.

use std::f64::consts::PI;

use dopplerga::signal_io::{apply_filter, design_bandpass_butterworth, AudioRecording};

pub fn tone(freq: f64, fs: u32, len: usize, phase: f64) -> Vec<f64> {
    (0..len).map(|n| (2.0 * PI * freq * n as f64 / fs as f64 + phase).sin()).collect()
}

/// Steady-state gain of the 25..600 Hz band-pass, measured by filtering a
/// 40 s tone and comparing RMS over the last 20 s.
pub fn measured_gain_db(freq: f64, fs: u32) -> f64 {
    let cascade = design_bandpass_butterworth(25.0, 600.0, fs as f64).unwrap();
    let x = tone(freq, fs, fs as usize * 40, 0.0);
    let y = apply_filter(&cascade, &AudioRecording::new(x.clone(), fs).unwrap()).unwrap();
    let tail = fs as usize * 20;
    let rms = |v: &[f64]| (v.iter().map(|s| s * s).sum::<f64>() / v.len() as f64).sqrt();
    20.0 * (rms(&y.samples()[y.len() - tail..]) / rms(&x[x.len() - tail..])).log10()
}
