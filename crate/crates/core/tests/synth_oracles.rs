//! Statistical checks of the synthetic corpus generator.

mod common;

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use dopplerga::features::{frame_energy, hamming_window, instantaneous_frequency, windowed_spectrum};
use dopplerga::synth::{
    add_noise, generate_beat_train, generate_dataset, in_band_energy, month_counts, presumed_label, synth_doppler,
    synth_recording, DatasetOptions, MonthDistribution, SynthConfig, BURSTS, CLINICAL_MONTH_COUNTS, SECOND_BURST_DELAY,
};

fn cfg(ga: f64, seed: u64) -> SynthConfig {
    SynthConfig { ga_months: ga, seed, ..Default::default() }
}

fn rr_stats(beats: &[f64]) -> (f64, f64) {
    let rr: Vec<f64> = beats.windows(2).map(|w| w[1] - w[0]).collect();
    let m = rr.iter().sum::<f64>() / rr.len() as f64;
    let v = rr.iter().map(|r| (r - m).powi(2)).sum::<f64>() / (rr.len() - 1) as f64;
    (m, v.sqrt())
}

#[test]
fn beat_trains_follow_the_month_parameters() {
    for (ga, bpm, std_ms) in [(5.0, 160.0, 2.0), (9.0, 148.0, 10.0)] {
        let beats = generate_beat_train(&cfg(ga, 1), &mut ChaCha8Rng::seed_from_u64(1));
        let (m, s) = rr_stats(&beats);
        let expected_beats = 300.0 * bpm / 60.0;
        assert!((beats.len() as f64 - expected_beats).abs() <= 2.0, "ga {ga}: {} beats", beats.len());
        assert!((60.0 / m - bpm).abs() < 0.5, "ga {ga}: {} bpm", 60.0 / m);
        assert!((s * 1e3 - std_ms).abs() <= 0.2 * std_ms, "ga {ga}: RR std {} ms", s * 1e3);
        assert!(beats.windows(2).all(|w| w[1] > w[0]));
    }
    let a = generate_beat_train(&cfg(7.0, 0), &mut ChaCha8Rng::seed_from_u64(9));
    let b = generate_beat_train(&cfg(7.0, 0), &mut ChaCha8Rng::seed_from_u64(9));
    assert_eq!(a, b);
}

#[test]
fn single_beat_energy_sits_in_two_bursts() {
    let c = SynthConfig { duration_s: 2.0, snr_db: f64::INFINITY, ..cfg(7.0, 0) };
    let audio = synth_doppler(&[0.5], &c, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    let x = audio.samples();
    let fs = c.fs_hz as f64;
    let rr = 60.0 / c.heart_rate_bpm();
    let spans: Vec<(usize, usize)> = BURSTS
        .iter()
        .enumerate()
        .map(|(k, &(dur, _, _))| {
            let onset = 0.5 + if k == 0 { 0.0 } else { SECOND_BURST_DELAY * rr };
            let s = (onset * fs).round() as usize;
            (s, s + (dur * fs).round() as usize)
        })
        .collect();
    let total: f64 = x.iter().map(|v| v * v).sum();
    let inside: f64 = spans.iter().map(|&(a, b)| x[a..b].iter().map(|v| v * v).sum::<f64>()).sum();
    assert!(inside / total >= 0.95, "{}", inside / total);
    // Exactly two separated bursts: silence between and around them.
    assert!(spans[0].1 < spans[1].0);
    for &(a, b) in &spans {
        assert!(x[a..b].iter().any(|v| v.abs() > 0.05));
    }
    assert!(x[spans[0].1 + 4..spans[1].0 - 4].iter().all(|v| v.abs() < 1e-3));
}

#[test]
fn burst_frequencies_match_their_centers() {
    let c = SynthConfig { duration_s: 2.0, snr_db: f64::INFINITY, ..cfg(7.0, 0) };
    let fs = c.fs_hz as f64;
    let w = hamming_window(400).unwrap();
    let rr = 60.0 / c.heart_rate_bpm();
    let mut sums = [0.0; 2];
    let trials = 30;
    for seed in 0..trials {
        let x = synth_doppler(&[0.5], &c, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap().into_samples();
        for (k, &(dur, _, _)) in BURSTS.iter().enumerate() {
            let onset = 0.5 + if k == 0 { 0.0 } else { SECOND_BURST_DELAY * rr };
            let (a, len) = ((onset * fs).round() as usize, (dur * fs).round() as usize);
            // The burst alone, centered in one analysis frame.
            let mut frame = vec![0.0; 400];
            let off = 200 - len / 2;
            frame[off..off + len].copy_from_slice(&x[a..a + len]);
            let s = windowed_spectrum(&frame, &w).unwrap();
            sums[k] += instantaneous_frequency(&s, frame_energy(&s)).unwrap();
        }
    }
    for (k, want) in [(0, 0.236), (1, 0.55)] {
        let mean = sums[k] / trials as f64;
        assert!((mean - want).abs() < 0.03, "burst {k}: {mean} rad/sample, want {want}");
        assert!((want - 2.0 * PI * BURSTS[k].1 / fs).abs() < 1e-3);
    }
}

#[test]
fn noise_calibration() {
    let c = SynthConfig { duration_s: 10.0, snr_db: f64::INFINITY, ..cfg(6.0, 0) };
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let clean = synth_doppler(&generate_beat_train(&c, &mut rng), &c, &mut rng).unwrap();
    let es = in_band_energy(clean.samples(), 4000);
    let total: f64 = clean.samples().iter().map(|v| v * v).sum::<f64>() / clean.len() as f64;
    assert!(es / total >= 0.9, "in-band fraction {}", es / total);

    assert_eq!(add_noise(&clean, f64::INFINITY, &mut rng).unwrap(), clean);
    let realized = |snr: f64, seed: u64| {
        let noisy = add_noise(&clean, snr, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let noise: Vec<f64> = noisy.samples().iter().zip(clean.samples()).map(|(a, b)| a - b).collect();
        (noisy, in_band_energy(&noise, 4000))
    };
    let (_, en0) = realized(0.0, 1);
    assert!((en0 / es - 1.0).abs() < 0.02, "0 dB ratio {}", en0 / es);
    let (n1, e1) = realized(6.0, 1);
    let (n2, e2) = realized(6.0, 2);
    assert_ne!(n1, n2);
    for e in [e1, e2] {
        assert!((10.0 * (es / e).log10() - 6.0).abs() < 0.1);
    }
    let silent = dopplerga::signal_io::AudioRecording::new(vec![0.0; 100], 4000).unwrap();
    assert!(add_noise(&silent, 6.0, &mut rng).is_err());
}

#[test]
fn presumed_label_monte_carlo() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 10_000;
    let hits = (0..n).filter(|_| presumed_label(7.0, 0.25, &mut rng) == 7).count();
    // P(|eta| < 0.5) for eta ~ N(0, 0.25^2) is erf(sqrt(2)) = 0.9545.
    let freq = hits as f64 / n as f64;
    assert!((freq - 0.954).abs() < 0.01, "{freq}");
    assert_eq!(presumed_label(7.0, 0.0, &mut rng), 7);
    for _ in 0..1000 {
        let l = presumed_label(9.4, 0.25, &mut rng);
        assert!((5..=9).contains(&l));
    }
}

#[test]
fn corpus_histogram_labels_and_determinism() {
    let counts = month_counts(40, &MonthDistribution::Clinical).unwrap();
    let total: f64 = CLINICAL_MONTH_COUNTS.iter().sum();
    for (c, w) in counts.iter().zip(CLINICAL_MONTH_COUNTS) {
        assert!((*c as f64 - 40.0 * w / total).abs() <= 1.0, "{counts:?}");
    }
    assert_eq!(month_counts(50, &MonthDistribution::Uniform).unwrap(), [10; 5]);

    let opts = DatasetOptions { duration_s: 3.0, ..Default::default() };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let da = generate_dataset(a.path(), 20, &MonthDistribution::Uniform, 8, &opts).unwrap();
    let db = generate_dataset(b.path(), 20, &MonthDistribution::Uniform, 8, &opts).unwrap();
    assert_eq!(std::fs::read(&da.manifest_path).unwrap(), std::fs::read(&db.manifest_path).unwrap());
    assert_eq!(std::fs::read(&da.truth_path).unwrap(), std::fs::read(&db.truth_path).unwrap());
    for e in &da.manifest.entries {
        let pa = da.manifest.resolve(e);
        let pb = db.manifest.resolve(e);
        assert_eq!(std::fs::read(pa).unwrap(), std::fs::read(pb).unwrap());
    }

    // One truth row per patient; every recording of a patient carries the
    // label implied by that patient's single eta.
    let truth: HashMap<_, _> = da.truth.iter().map(|t| (t.patient_id.clone(), t)).collect();
    assert_eq!(truth.len(), 20);
    let mut per_patient: BTreeMap<&str, Vec<u8>> = BTreeMap::new();
    for e in &da.manifest.entries {
        let t = truth[&e.patient_id];
        let want = (t.true_ga + t.eta).round().clamp(5.0, 9.0) as u8;
        assert_eq!(e.ga_months_lmp, want);
        per_patient.entry(&e.patient_id).or_default().push(e.ga_months_lmp);
    }
    assert!(per_patient.values().all(|v| (1..=2).contains(&v.len())));
}

/// Mean measured beat rate falls and RR dispersion rises with every month.
#[test]
fn rhythm_trend_is_monotone_across_months() {
    let per_month = 30;
    let mut rows = Vec::new();
    for month in 5..=9 {
        let (mut bpm, mut disp) = (0.0, 0.0);
        for p in 0..per_month {
            let c = SynthConfig { duration_s: 60.0, ..cfg(month as f64, 0) };
            let mut rng = ChaCha8Rng::seed_from_u64(1000 * month + p);
            let rec = synth_recording(&c, 0.0, &mut rng).unwrap();
            let x = rec.audio.samples();
            bpm += common::rhythm::autocorr_bpm(x, 4000);
            disp += common::rhythm::rr_dispersion(&common::rhythm::detect_beats(x, 4000));
        }
        rows.push((month, bpm / per_month as f64, disp / per_month as f64 * 1e3));
    }
    println!("(month, bpm, RR dispersion ms): {rows:?}");
    for w in rows.windows(2) {
        assert!(w[1].1 < w[0].1, "beat rate not decreasing: {rows:?}");
        assert!(w[1].2 > w[0].2, "RR dispersion not increasing: {rows:?}");
    }
}
