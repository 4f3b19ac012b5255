//! Labeled synthetic Doppler recordings with a known GA-dependent rhythm.
//!
//! Heart rate drops from 160 bpm at 5 months by 3 bpm per month, and
//! beat-to-beat jitter (AR(1), coefficient [`RR_AR_COEFF`]) grows from 2 ms by
//! 2 ms per month. Each beat produces two Hann-enveloped band-limited noise
//! bursts standing in for valve events.

mod dataset;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use thiserror::Error;

use crate::signal_io::{apply_filter, design_bandpass_butterworth, AudioRecording, SignalError, BAND_HIGH_HZ, BAND_LOW_HZ};

pub use dataset::{
    generate_dataset, month_counts, DatasetOptions, MonthDistribution, SynthDataset, TruthRow, CLINICAL_MONTH_COUNTS,
    TRUTH_HEADER,
};

pub const RR_AR_COEFF: f64 = 0.7;
/// Fraction of the RR interval between the two bursts of a beat.
pub const SECOND_BURST_DELAY: f64 = 0.18;
/// `(duration s, center Hz, amplitude)` of the two bursts.
pub const BURSTS: [(f64, f64, f64); 2] = [(0.030, 150.0, 1.0), (0.020, 350.0, 0.6)];
/// Half-width of each burst's pass band around its center.
const BURST_HALF_BAND_HZ: f64 = 30.0;
/// Filter settling time discarded before each burst.
const BURST_LEAD_S: f64 = 0.1;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthesis configuration: {0}")]
    InvalidConfig(String),
    #[error("cannot add noise to a silent recording")]
    SilentInput,
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error("{path}: {source}")]
    Io { path: std::path::PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub ga_months: f64,
    pub duration_s: f64,
    pub fs_hz: u32,
    /// In-band SNR; `f64::INFINITY` disables noise.
    pub snr_db: f64,
    pub eta_std_months: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self { ga_months: 7.0, duration_s: 300.0, fs_hz: 4000, snr_db: 6.0, eta_std_months: 0.25, seed: 0 }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        if !(5.0..=9.0).contains(&self.ga_months) {
            return Err(SynthError::InvalidConfig(format!("GA {} outside [5, 9] months", self.ga_months)));
        }
        if !(self.duration_s > 1.0 && self.duration_s.is_finite()) {
            return Err(SynthError::InvalidConfig(format!("duration {} s (must exceed 1 s)", self.duration_s)));
        }
        if self.fs_hz < 2 * BAND_HIGH_HZ as u32 {
            return Err(SynthError::InvalidConfig(format!("sample rate {} Hz too low for the cardiac band", self.fs_hz)));
        }
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            return Err(SynthError::InvalidConfig(format!("SNR {} dB", self.snr_db)));
        }
        if !(self.eta_std_months >= 0.0 && self.eta_std_months.is_finite()) {
            return Err(SynthError::InvalidConfig(format!("eta std {}", self.eta_std_months)));
        }
        Ok(())
    }

    pub fn heart_rate_bpm(&self) -> f64 {
        160.0 - 3.0 * (self.ga_months - 5.0)
    }

    pub fn rr_std_s(&self) -> f64 {
        (2.0 + 2.0 * (self.ga_months - 5.0)) * 1e-3
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthRecording {
    pub audio: AudioRecording,
    pub true_ga_months: f64,
    pub presumed_ga_months: u8,
    pub beat_times: Vec<f64>,
}

/// Beat onsets in `[0, duration)`. The first beat falls uniformly within the
/// first mean RR interval; RR deviations follow a stationary AR(1) process.
pub fn generate_beat_train<R: Rng>(cfg: &SynthConfig, rng: &mut R) -> Vec<f64> {
    let mean_rr = 60.0 / cfg.heart_rate_bpm();
    let sigma = cfg.rr_std_s();
    let innovation = sigma * (1.0 - RR_AR_COEFF * RR_AR_COEFF).sqrt();
    let mut dev = sigma * rng.sample::<f64, _>(StandardNormal);
    let mut t = rng.random_range(0.0..mean_rr);
    let mut beats = Vec::with_capacity((cfg.duration_s / mean_rr) as usize + 2);
    while t < cfg.duration_s {
        beats.push(t);
        dev = RR_AR_COEFF * dev + innovation * rng.sample::<f64, _>(StandardNormal);
        // Jitter is milliseconds against a ~400 ms mean, so RR stays positive.
        t += (mean_rr + dev).max(0.25 * mean_rr);
    }
    beats
}

/// Unit-peak band-limited noise shaped by a Hann window, `len` samples.
fn burst<R: Rng>(len: usize, center_hz: f64, fs: u32, rng: &mut R) -> Result<Vec<f64>, SignalError> {
    let lead = (BURST_LEAD_S * f64::from(fs)).round() as usize;
    let noise: Vec<f64> = (0..lead + len).map(|_| rng.sample(StandardNormal)).collect();
    let cascade = design_bandpass_butterworth(center_hz - BURST_HALF_BAND_HZ, center_hz + BURST_HALF_BAND_HZ, f64::from(fs))?;
    let filtered = apply_filter(&cascade, &AudioRecording::new(noise, fs)?)?.into_samples();
    let mut b = filtered[lead..].to_vec();
    let peak = b.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let denom = (len.max(2) - 1) as f64;
    for (n, v) in b.iter_mut().enumerate() {
        let hann = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / denom).cos();
        *v = *v / peak * hann;
    }
    Ok(b)
}

/// Renders the two-burst morphology for every beat. Bursts running past the
/// end of the recording are cut off.
pub fn synth_doppler<R: Rng>(beats: &[f64], cfg: &SynthConfig, rng: &mut R) -> Result<AudioRecording, SynthError> {
    cfg.validate()?;
    let fs = f64::from(cfg.fs_hz);
    let n = (cfg.duration_s * fs).round() as usize;
    let mut out = vec![0.0; n];
    for (i, &t) in beats.iter().enumerate() {
        let rr = beats.get(i + 1).map_or(60.0 / cfg.heart_rate_bpm(), |next| next - t);
        for (k, &(dur, center, amp)) in BURSTS.iter().enumerate() {
            let onset = t + if k == 0 { 0.0 } else { SECOND_BURST_DELAY * rr };
            let start = (onset * fs).round() as usize;
            if start >= n {
                continue;
            }
            let b = burst((dur * fs).round() as usize, center, cfg.fs_hz, rng)?;
            for (o, v) in out[start..].iter_mut().zip(&b) {
                *o += amp * v;
            }
        }
    }
    Ok(AudioRecording::new(out, cfg.fs_hz)?)
}

/// Energy of `samples` falling in the 25..600 Hz band, from the full DFT
/// (both signs of frequency), normalized by the length.
pub fn in_band_energy(samples: &[f64], fs_hz: u32) -> f64 {
    let n = samples.len();
    if n == 0 {
        return 0.0;
    }
    let mut buf: Vec<Complex64> = samples.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let df = f64::from(fs_hz) / n as f64;
    buf.iter()
        .enumerate()
        .filter(|(k, _)| {
            let f = (*k).min(n - *k) as f64 * df;
            (BAND_LOW_HZ..=BAND_HIGH_HZ).contains(&f)
        })
        .map(|(_, c)| c.norm_sqr())
        .sum::<f64>()
        / n as f64
}

/// Adds white Gaussian noise scaled so the in-band SNR is exactly `snr_db`.
/// `f64::INFINITY` returns the input unchanged.
pub fn add_noise<R: Rng>(audio: &AudioRecording, snr_db: f64, rng: &mut R) -> Result<AudioRecording, SynthError> {
    if snr_db == f64::INFINITY {
        return Ok(audio.clone());
    }
    if !snr_db.is_finite() {
        return Err(SynthError::InvalidConfig(format!("SNR {snr_db} dB")));
    }
    let fs = audio.sample_rate_hz();
    let es = in_band_energy(audio.samples(), fs);
    if !(es > 0.0) {
        return Err(SynthError::SilentInput);
    }
    let noise: Vec<f64> = (0..audio.len()).map(|_| rng.sample(StandardNormal)).collect();
    let en = in_band_energy(&noise, fs);
    let scale = (es / (en * 10f64.powf(snr_db / 10.0))).sqrt();
    let samples = audio.samples().iter().zip(&noise).map(|(s, n)| s + scale * n).collect();
    Ok(AudioRecording::new(samples, fs)?.with_ids(&audio.patient_id, &audio.visit_id, &audio.recording_id))
}

/// `clamp(round(true_ga + eta), 5, 9)`.
pub fn label_from_eta(true_ga: f64, eta: f64) -> u8 {
    (true_ga + eta).round().clamp(5.0, 9.0) as u8
}

/// Draws the presumption error and returns `(label, eta)`.
pub fn draw_presumed_label<R: Rng>(true_ga: f64, eta_std: f64, rng: &mut R) -> (u8, f64) {
    let eta = if eta_std > 0.0 { Normal::new(0.0, eta_std).expect("positive std").sample(rng) } else { 0.0 };
    (label_from_eta(true_ga, eta), eta)
}

pub fn presumed_label<R: Rng>(true_ga: f64, eta_std: f64, rng: &mut R) -> u8 {
    draw_presumed_label(true_ga, eta_std, rng).0
}

/// Beats, bursts and noise for one recording, all drawn from `rng`.
/// `eta` is the patient's presumption error.
pub fn synth_recording(cfg: &SynthConfig, eta: f64, rng: &mut ChaCha8Rng) -> Result<SynthRecording, SynthError> {
    cfg.validate()?;
    let beats = generate_beat_train(cfg, rng);
    let clean = synth_doppler(&beats, cfg, rng)?;
    let audio = if beats.is_empty() { clean } else { add_noise(&clean, cfg.snr_db, rng)? };
    Ok(SynthRecording {
        audio,
        true_ga_months: cfg.ga_months,
        presumed_ga_months: label_from_eta(cfg.ga_months, eta),
        beat_times: beats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn cfg(ga: f64) -> SynthConfig {
        SynthConfig { ga_months: ga, ..Default::default() }
    }

    fn rr_stats(beats: &[f64]) -> (f64, f64) {
        let rr: Vec<f64> = beats.windows(2).map(|w| w[1] - w[0]).collect();
        let mean = rr.iter().sum::<f64>() / rr.len() as f64;
        let var = rr.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (rr.len() - 1) as f64;
        (mean, var.sqrt())
    }

    #[test]
    fn beat_train_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b5 = generate_beat_train(&cfg(5.0), &mut rng);
        assert!((b5.len() as f64 - 800.0).abs() < 5.0, "{}", b5.len());
        let (mean, std) = rr_stats(&b5);
        assert!((60.0 / mean - 160.0).abs() < 0.5);
        assert!((std - 2e-3).abs() < 0.4e-3, "{std}");
        let b9 = generate_beat_train(&cfg(9.0), &mut rng);
        let (mean, std) = rr_stats(&b9);
        assert!((60.0 / mean - 148.0).abs() < 1.0);
        assert!((std - 10e-3).abs() < 2e-3, "{std}");
        assert!(b9.windows(2).all(|w| w[1] > w[0]));
        let again = generate_beat_train(&cfg(5.0), &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(again, b5);
    }

    #[test]
    fn empty_beat_list_is_silent() {
        let c = SynthConfig { duration_s: 2.0, ..cfg(6.0) };
        let a = synth_doppler(&[], &c, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(a.len(), 8000);
        assert!(a.samples().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn noise_calibration() {
        let c = SynthConfig { duration_s: 4.0, ..cfg(7.0) };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let beats = generate_beat_train(&c, &mut rng);
        let clean = synth_doppler(&beats, &c, &mut rng).unwrap();
        let es = in_band_energy(clean.samples(), 4000);
        for (snr, seed) in [(0.0, 3), (0.0, 4), (6.0, 5)] {
            let noisy = add_noise(&clean, snr, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let noise: Vec<f64> = noisy.samples().iter().zip(clean.samples()).map(|(a, b)| a - b).collect();
            let realized = 10.0 * (es / in_band_energy(&noise, 4000)).log10();
            assert!((realized - snr).abs() < 0.1, "{realized}");
        }
        assert_eq!(add_noise(&clean, f64::INFINITY, &mut rng).unwrap(), clean);
        let silent = AudioRecording::new(vec![0.0; 100], 4000).unwrap();
        assert!(matches!(add_noise(&silent, 3.0, &mut rng), Err(SynthError::SilentInput)));
    }

    #[test]
    fn labels() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(presumed_label(7.0, 0.0, &mut rng), 7);
        assert_eq!(label_from_eta(9.4, 0.3), 9);
        assert_eq!(label_from_eta(5.2, -1.0), 5);
    }
}
