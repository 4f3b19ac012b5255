use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::FeatureError;

/// Frames with energy at or below this are degenerate (silence).
pub const ENERGY_EPS: f64 = 1e-12;
/// Bandwidth (rad^2) at or below which the Q-factor is capped.
pub const BANDWIDTH_EPS: f64 = 1e-12;
pub const Q_MAX: f64 = 1e3;

/// Symmetric Hamming window `0.54 - 0.46 cos(2 pi m / (n - 1))`.
pub fn hamming_window(n: usize) -> Result<Vec<f64>, FeatureError> {
    if n < 2 {
        return Err(FeatureError::WindowTooShort(n));
    }
    let denom = (n - 1) as f64;
    Ok((0..n).map(|m| 0.54 - 0.46 * (2.0 * PI * m as f64 / denom).cos()).collect())
}

/// Reusable FFT plan for one window length.
pub struct SpectrumAnalyzer {
    n: usize,
    fft: Arc<dyn Fft<f64>>,
    buffer: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl SpectrumAnalyzer {
    pub fn new(n: usize) -> Result<Self, FeatureError> {
        if n < 2 || !n.is_multiple_of(2) {
            return Err(FeatureError::OddLength(n));
        }
        let fft = FftPlanner::new().plan_fft_forward(n);
        let scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
        Ok(Self { n, fft, buffer: vec![Complex64::default(); n], scratch })
    }

    /// One-sided spectrum (`n/2 + 1` bins) of `window * frame`.
    pub fn spectrum(&mut self, frame: &[f64], window: &[f64]) -> Result<&[Complex64], FeatureError> {
        if frame.len() != self.n || window.len() != self.n {
            return Err(FeatureError::LengthMismatch { frame: frame.len(), window: window.len() });
        }
        for (i, ((b, &x), &w)) in self.buffer.iter_mut().zip(frame).zip(window).enumerate() {
            if !x.is_finite() || !w.is_finite() {
                return Err(FeatureError::NonFinite { index: i });
            }
            *b = Complex64::new(w * x, 0.0);
        }
        self.fft.process_with_scratch(&mut self.buffer, &mut self.scratch);
        Ok(&self.buffer[..self.n / 2 + 1])
    }
}

/// `S_k = sum_m w_m x_m e^{-j 2 pi k m / N}` for `k = 0..=N/2`.
pub fn windowed_spectrum(frame: &[f64], window: &[f64]) -> Result<Vec<Complex64>, FeatureError> {
    if frame.len() != window.len() {
        return Err(FeatureError::LengthMismatch { frame: frame.len(), window: window.len() });
    }
    let mut analyzer = SpectrumAnalyzer::new(frame.len())?;
    Ok(analyzer.spectrum(frame, window)?.to_vec())
}

/// One-sided bin weight: DC and Nyquist once, interior bins twice.
#[inline]
fn bin_weight(k: usize, last: usize) -> f64 {
    if k == 0 || k == last {
        1.0
    } else {
        2.0
    }
}

fn window_len(spectrum: &[Complex64]) -> usize {
    2 * (spectrum.len().max(1) - 1)
}

/// Weighted power `c_k |S_k|^2` summed over the one-sided spectrum.
fn weighted_power(spectrum: &[Complex64]) -> f64 {
    let last = spectrum.len() - 1;
    spectrum.iter().enumerate().map(|(k, s)| bin_weight(k, last) * s.norm_sqr()).sum()
}

/// Frame energy from the one-sided spectrum; equals the time-domain
/// `sum |s_m|^2` by Parseval.
pub fn frame_energy(spectrum: &[Complex64]) -> f64 {
    if spectrum.len() < 2 {
        return spectrum.first().map_or(0.0, |s| s.norm_sqr());
    }
    weighted_power(spectrum) / window_len(spectrum) as f64
}

/// First spectral moment over `[0, pi]`, in radians per sample.
pub fn instantaneous_frequency(spectrum: &[Complex64], energy: f64) -> Result<f64, FeatureError> {
    if energy <= ENERGY_EPS || spectrum.len() < 2 {
        return Err(FeatureError::DegenerateFrame);
    }
    let n = window_len(spectrum) as f64;
    let last = spectrum.len() - 1;
    let mut num = 0.0;
    let mut den = 0.0;
    for (k, s) in spectrum.iter().enumerate() {
        let p = bin_weight(k, last) * s.norm_sqr();
        num += 2.0 * PI * k as f64 / n * p;
        den += p;
    }
    Ok((num / den).clamp(0.0, PI))
}

/// Centralized second spectral moment around `omega`, in rad^2.
pub fn instantaneous_bandwidth_sq(spectrum: &[Complex64], omega: f64, energy: f64) -> Result<f64, FeatureError> {
    if energy <= ENERGY_EPS || spectrum.len() < 2 {
        return Err(FeatureError::DegenerateFrame);
    }
    let n = window_len(spectrum) as f64;
    let last = spectrum.len() - 1;
    let mut num = 0.0;
    let mut den = 0.0;
    for (k, s) in spectrum.iter().enumerate() {
        let p = bin_weight(k, last) * s.norm_sqr();
        let d = 2.0 * PI * k as f64 / n - omega;
        num += d * d * p;
        den += p;
    }
    Ok((num / den).max(0.0))
}

/// `omega / sqrt(bw_sq)`, capped at [`Q_MAX`] when the bandwidth vanishes.
pub fn q_factor(omega: f64, bw_sq: f64) -> f64 {
    if bw_sq > BANDWIDTH_EPS {
        omega / bw_sq.sqrt()
    } else {
        Q_MAX
    }
}
