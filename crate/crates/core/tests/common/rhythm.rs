//! Rhythm measurement straight from audio, independent of the generator's
//! beat list.

/// Running mean of `x^2` over `win` samples, centered.
fn energy_envelope(x: &[f64], win: usize) -> Vec<f64> {
    let mut prefix = vec![0.0; x.len() + 1];
    for (i, v) in x.iter().enumerate() {
        prefix[i + 1] = prefix[i] + v * v;
    }
    let h = win / 2;
    (0..x.len())
        .map(|i| {
            let (a, b) = (i.saturating_sub(h), (i + h + 1).min(x.len()));
            (prefix[b] - prefix[a]) / (b - a) as f64
        })
        .collect()
}

/// Beat rate (bpm) from the autocorrelation peak of the energy envelope,
/// searched over 120..200 bpm with parabolic refinement.
pub fn autocorr_bpm(x: &[f64], fs: u32) -> f64 {
    let dec = (fs / 1000).max(1) as usize;
    let env: Vec<f64> = energy_envelope(x, dec * 10).iter().step_by(dec).copied().collect();
    let rate = fs as f64 / dec as f64;
    let mean = env.iter().sum::<f64>() / env.len() as f64;
    let e: Vec<f64> = env.iter().map(|v| v - mean).collect();
    let ac = |lag: usize| e[..e.len() - lag].iter().zip(&e[lag..]).map(|(a, b)| a * b).sum::<f64>();
    let (lo, hi) = ((60.0 / 200.0 * rate) as usize, (60.0 / 120.0 * rate) as usize);
    let vals: Vec<f64> = (lo - 1..=hi + 1).map(ac).collect();
    let k = (1..vals.len() - 1).max_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap();
    let (y0, y1, y2) = (vals[k - 1], vals[k], vals[k + 1]);
    let denom = y0 - 2.0 * y1 + y2;
    let off = if denom.abs() > 0.0 { 0.5 * (y0 - y2) / denom } else { 0.0 };
    60.0 / ((lo - 1 + k) as f64 + off) * rate
}

/// Keeps only DFT bins within `[lo, hi]` Hz.
fn brickwall(x: &[f64], fs: u32, lo: f64, hi: f64) -> Vec<f64> {
    use num_complex::Complex64;
    let n = x.len();
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let mut planner = rustfft::FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buf);
    for (k, c) in buf.iter_mut().enumerate() {
        let f = k.min(n - k) as f64 * fs as f64 / n as f64;
        if !(lo..=hi).contains(&f) {
            *c = Complex64::new(0.0, 0.0);
        }
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    buf.iter().map(|c| c.re / n as f64).collect()
}

/// Beat times (s) of the 150 Hz burst: band-limit to 110..190 Hz, pick
/// largest-first peaks of a 30 ms energy envelope at least 250 ms apart,
/// then refine each to the energy centroid within +-25 ms.
pub fn detect_beats(x: &[f64], fs: u32) -> Vec<f64> {
    let y = brickwall(x, fs, 110.0, 190.0);
    let env = energy_envelope(&y, (0.030 * fs as f64) as usize);
    let mut cand: Vec<usize> = (1..env.len() - 1).filter(|&i| env[i] > env[i - 1] && env[i] >= env[i + 1]).collect();
    cand.sort_by(|&a, &b| env[b].total_cmp(&env[a]));
    let sep = (0.25 * fs as f64) as usize;
    let half = (0.025 * fs as f64) as usize;
    let mut taken = vec![false; env.len()];
    let mut peaks = Vec::new();
    let floor = env[cand[0]] * 0.1;
    for i in cand {
        if env[i] < floor {
            break;
        }
        let (a, b) = (i.saturating_sub(sep), (i + sep).min(env.len() - 1));
        if taken[a..=b].iter().any(|&t| t) {
            continue;
        }
        taken[i] = true;
        peaks.push(i);
    }
    peaks.sort_unstable();
    peaks
        .into_iter()
        .map(|i| {
            let (a, b) = (i.saturating_sub(half), (i + half).min(y.len() - 1));
            let (mut num, mut den) = (0.0, 0.0);
            for (j, v) in y[a..=b].iter().enumerate() {
                num += (a + j) as f64 * v * v;
                den += v * v;
            }
            num / den / fs as f64
        })
        .collect()
}

/// Standard deviation of detected RR intervals, ignoring intervals more
/// than 30% away from the median (missed or spurious detections).
pub fn rr_dispersion(beats: &[f64]) -> f64 {
    let mut rr: Vec<f64> = beats.windows(2).map(|w| w[1] - w[0]).collect();
    rr.sort_by(f64::total_cmp);
    let med = rr[rr.len() / 2];
    let kept: Vec<f64> = rr.into_iter().filter(|r| (r - med).abs() < 0.3 * med).collect();
    let m = kept.iter().sum::<f64>() / kept.len() as f64;
    (kept.iter().map(|r| (r - m).powi(2)).sum::<f64>() / (kept.len() - 1) as f64).sqrt()
}
