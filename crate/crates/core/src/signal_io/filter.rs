use std::f64::consts::PI;

use num_complex::Complex64;

use super::{AudioRecording, SignalError};

/// One second-order section in direct form II transposed, `a0 = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiquadSection {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl BiquadSection {
    /// Roots of `z^2 + a1 z + a2`.
    pub fn poles(&self) -> [Complex64; 2] {
        let disc = Complex64::new(self.a1 * self.a1 - 4.0 * self.a2, 0.0).sqrt();
        [(-self.a1 + disc) / 2.0, (-self.a1 - disc) / 2.0]
    }

    pub fn is_stable(&self) -> bool {
        self.poles().iter().all(|p| p.norm() < 1.0)
    }

    /// Transfer function at `z = e^{jw}`.
    pub fn response(&self, omega: f64) -> Complex64 {
        let z1 = Complex64::from_polar(1.0, -omega);
        let z2 = z1 * z1;
        (self.b0 + self.b1 * z1 + self.b2 * z2) / (1.0 + self.a1 * z1 + self.a2 * z2)
    }
}

/// Ordered cascade of stable biquads. Immutable once designed.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterCascade {
    sections: Vec<BiquadSection>,
}

impl FilterCascade {
    pub fn new(sections: Vec<BiquadSection>) -> Result<Self, SignalError> {
        if let Some(i) = sections.iter().position(|s| !s.is_stable()) {
            return Err(SignalError::UnstableSection(i));
        }
        Ok(Self { sections })
    }

    pub fn sections(&self) -> &[BiquadSection] {
        &self.sections
    }

    pub fn response_at(&self, freq_hz: f64, fs_hz: f64) -> Complex64 {
        let omega = 2.0 * PI * freq_hz / fs_hz;
        self.sections.iter().map(|s| s.response(omega)).product()
    }

    pub fn magnitude_db(&self, freq_hz: f64, fs_hz: f64) -> f64 {
        20.0 * self.response_at(freq_hz, fs_hz).norm().log10()
    }
}

/// Second-order Butterworth band-pass between `low_hz` and `high_hz`.
///
/// The order-2 analog low-pass prototype is mapped to a band-pass (four
/// poles), discretized with the bilinear transform pre-warped at both
/// cutoffs, and split into two biquads with zeros at `z = 1` and `z = -1`.
/// Gain is unity at the geometric center, so both cutoffs land at -3 dB.
pub fn design_bandpass_butterworth(low_hz: f64, high_hz: f64, fs_hz: f64) -> Result<FilterCascade, SignalError> {
    if !(fs_hz.is_finite() && fs_hz > 0.0) {
        return Err(SignalError::InvalidDesign(format!("sample rate {fs_hz}")));
    }
    let nyquist = fs_hz / 2.0;
    if !(low_hz > 0.0 && low_hz < high_hz) {
        return Err(SignalError::InvalidDesign(format!("need 0 < low < high, got {low_hz}, {high_hz}")));
    }
    if high_hz >= nyquist {
        return Err(SignalError::InvalidDesign(format!("cutoff {high_hz} Hz at or above Nyquist {nyquist} Hz")));
    }

    let k = 2.0 * fs_hz;
    let w_low = k * (PI * low_hz / fs_hz).tan();
    let w_high = k * (PI * high_hz / fs_hz).tan();
    let bandwidth = w_high - w_low;
    let center_sq = w_low * w_high;

    // Upper-half-plane pole of the normalized order-2 Butterworth prototype.
    let proto = Complex64::from_polar(1.0, 3.0 * PI / 4.0);
    // s^2 - p*BW*s + w0^2 = 0 yields one upper and one lower band-pass pole;
    // each gets its own conjugate pair (and section).
    let pb = proto * bandwidth;
    let disc = (pb * pb - 4.0 * center_sq).sqrt();
    let analog = [(pb + disc) / 2.0, (pb - disc) / 2.0];

    let mut sections: Vec<BiquadSection> = analog
        .iter()
        .map(|&s| {
            let z = (k + s) / (k - s);
            BiquadSection { b0: 1.0, b1: 0.0, b2: -1.0, a1: -2.0 * z.re, a2: z.norm_sqr() }
        })
        .collect();

    let omega_center = 2.0 * (center_sq.sqrt() / k).atan();
    let gain: f64 = sections.iter().map(|s| s.response(omega_center).norm()).product();
    let per_section = gain.sqrt().recip();
    for s in &mut sections {
        s.b0 *= per_section;
        s.b2 *= per_section;
    }
    FilterCascade::new(sections)
}

/// Causal DF-II-T filtering from zero state. Fails on the first non-finite
/// input sample.
pub fn apply_filter(cascade: &FilterCascade, rec: &AudioRecording) -> Result<AudioRecording, SignalError> {
    let mut state = vec![[0.0_f64; 2]; cascade.sections.len()];
    let mut out = Vec::with_capacity(rec.len());
    for (index, &x) in rec.samples().iter().enumerate() {
        if !x.is_finite() {
            return Err(SignalError::NonFiniteSample { index });
        }
        let mut v = x;
        for (s, st) in cascade.sections.iter().zip(state.iter_mut()) {
            let y = s.b0 * v + st[0];
            st[0] = s.b1 * v - s.a1 * y + st[1];
            st[1] = s.b2 * v - s.a2 * y;
            v = y;
        }
        out.push(v);
    }
    Ok(rec.replace_samples(out, rec.sample_rate_hz()))
}
