use std::f64::consts::PI;

use super::{AudioRecording, SignalError};

/// Lowest target rate that keeps the 25..600 Hz band clear of the
/// anti-alias transition.
pub const MIN_TARGET_RATE_HZ: u32 = 1300;

const KAISER_BETA: f64 = 8.6;
/// Taps per phase, counted at the lower of the two rates.
const TAPS_PER_PHASE: usize = 64;
const CUTOFF_FRACTION: f64 = 0.45;
/// Phase tables larger than this are evaluated on the fly.
const MAX_TABLE_PHASES: usize = 4096;

/// Rational-ratio polyphase resampler with a Kaiser-windowed sinc kernel.
///
/// The anti-alias cutoff sits at `0.45 * min(source, target)`. When
/// downsampling, the kernel is stretched by the decimation ratio so it still
/// spans 64 periods of the (lower) target rate. Each phase is normalized to
/// unit DC gain.
pub fn resample(rec: &AudioRecording, target_rate_hz: u32) -> Result<AudioRecording, SignalError> {
    if target_rate_hz < MIN_TARGET_RATE_HZ {
        return Err(SignalError::AliasingTargetRate { target_hz: target_rate_hz, min_hz: MIN_TARGET_RATE_HZ });
    }
    let source = rec.sample_rate_hz();
    if source == target_rate_hz {
        return Ok(rec.clone());
    }
    let kernel = PolyphaseKernel::new(source, target_rate_hz);
    let input = rec.samples();
    let out_len = ((input.len() as u128 * target_rate_hz as u128 + source as u128 / 2) / source as u128) as usize;
    let out_len = out_len.max(1);

    let half = kernel.half_taps as i64;
    let mut scratch = Vec::new();
    let output = (0..out_len)
        .map(|j| {
            let num = j as u128 * kernel.down as u128;
            let base = (num / kernel.up as u128) as i64;
            let phase = (num % kernel.up as u128) as usize;
            let taps = kernel.phase_taps(phase, &mut scratch);
            let first = base + 1 - half;
            let mut acc = 0.0;
            // taps[i] weights input sample `first + i`.
            for (i, &h) in taps.iter().enumerate() {
                let n = first + i as i64;
                if n >= 0 && (n as usize) < input.len() {
                    acc += h * input[n as usize];
                }
            }
            acc
        })
        .collect();
    Ok(rec.replace_samples(output, target_rate_hz))
}

struct PolyphaseKernel {
    up: u64,
    down: u64,
    half_taps: usize,
    cutoff_per_input: f64,
    table: Option<Vec<Vec<f64>>>,
}

impl PolyphaseKernel {
    fn new(source: u32, target: u32) -> Self {
        let g = gcd(source as u64, target as u64);
        let up = target as u64 / g;
        let down = source as u64 / g;
        let lower = source.min(target) as f64;
        // Half-length in input samples: 32 periods of the lower rate.
        let half_taps = ((TAPS_PER_PHASE as f64 / 2.0) * source as f64 / lower).ceil() as usize;
        let cutoff_per_input = CUTOFF_FRACTION * lower / source as f64;
        let mut kernel = Self { up, down, half_taps, cutoff_per_input, table: None };
        if (up as usize) <= MAX_TABLE_PHASES {
            let table = (0..up as usize).map(|p| kernel.compute_phase(p)).collect();
            kernel.table = Some(table);
        }
        kernel
    }

    fn phase_taps<'a>(&'a self, phase: usize, scratch: &'a mut Vec<f64>) -> &'a [f64] {
        match &self.table {
            Some(t) => &t[phase],
            None => {
                *scratch = self.compute_phase(phase);
                scratch
            }
        }
    }

    /// Taps for output position `base + phase/up`, ordered from input
    /// `base + 1 - half` to `base + half`.
    fn compute_phase(&self, phase: usize) -> Vec<f64> {
        let frac = phase as f64 / self.up as f64;
        let half = self.half_taps as f64;
        let fc = self.cutoff_per_input;
        let mut taps: Vec<f64> = (0..2 * self.half_taps)
            .map(|i| {
                // Distance from the output instant back to this input sample.
                let d = (half - 1.0 - i as f64) + frac;
                2.0 * fc * sinc(2.0 * fc * d) * kaiser(d / half, KAISER_BETA)
            })
            .collect();
        let sum: f64 = taps.iter().sum();
        taps.iter_mut().for_each(|t| *t /= sum);
        taps
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

fn kaiser(x: f64, beta: f64) -> f64 {
    if x.abs() > 1.0 {
        return 0.0;
    }
    bessel_i0(beta * (1.0 - x * x).sqrt()) / bessel_i0(beta)
}

/// Modified Bessel function of the first kind, order zero (power series).
fn bessel_i0(x: f64) -> f64 {
    let half_sq = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= half_sq / (k as f64 * k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}
