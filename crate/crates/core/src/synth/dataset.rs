use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{draw_presumed_label, synth_recording, SynthConfig, SynthError};
use crate::signal_io::{write_manifest, write_wav_pcm16, AudioRecording, DatasetManifest, ManifestEntry};

/// Recordings per GA month (5..9) in the clinical dataset the synthetic
/// corpus mimics.
pub const CLINICAL_MONTH_COUNTS: [f64; 5] = [15.0, 77.0, 162.0, 186.0, 253.0];
pub const TRUTH_HEADER: &str = "patient_id,true_ga,eta";
/// Output gain applied before 16-bit quantization.
const WAV_GAIN: f64 = 0.25;
/// Probability that a visit has a second recording.
const SECOND_RECORDING_P: f64 = 0.4;

#[derive(Debug, Clone, PartialEq)]
pub enum MonthDistribution {
    /// Proportional to [`CLINICAL_MONTH_COUNTS`].
    Clinical,
    Uniform,
    /// Relative weights for months 5..9.
    Weights([f64; 5]),
}

impl MonthDistribution {
    fn weights(&self) -> [f64; 5] {
        match self {
            Self::Clinical => CLINICAL_MONTH_COUNTS,
            Self::Uniform => [1.0; 5],
            Self::Weights(w) => *w,
        }
    }
}

/// Patients per month (5..9) by the largest-remainder method; ties in the
/// remainder go to the earlier month.
pub fn month_counts(n_patients: usize, dist: &MonthDistribution) -> Result<[usize; 5], SynthError> {
    let w = dist.weights();
    let total: f64 = w.iter().sum();
    if w.iter().any(|&x| !(x >= 0.0 && x.is_finite())) || !(total > 0.0) {
        return Err(SynthError::InvalidConfig(format!("month weights {w:?}")));
    }
    let exact: Vec<f64> = w.iter().map(|x| x / total * n_patients as f64).collect();
    let mut counts = [0usize; 5];
    for (c, e) in counts.iter_mut().zip(&exact) {
        *c = e.floor() as usize;
    }
    let mut rest: Vec<usize> = (0..5).collect();
    rest.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    let missing = n_patients - counts.iter().sum::<usize>();
    for &i in rest.iter().take(missing) {
        counts[i] += 1;
    }
    Ok(counts)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetOptions {
    pub duration_s: f64,
    pub fs_hz: u32,
    pub snr_db: f64,
    pub eta_std_months: f64,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        let c = SynthConfig::default();
        Self { duration_s: c.duration_s, fs_hz: c.fs_hz, snr_db: c.snr_db, eta_std_months: c.eta_std_months }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruthRow {
    pub patient_id: String,
    pub true_ga: f64,
    pub eta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub manifest: DatasetManifest,
    pub truth: Vec<TruthRow>,
    pub manifest_path: PathBuf,
    pub truth_path: PathBuf,
}

struct Patient {
    truth: TruthRow,
    entries: Vec<ManifestEntry>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SynthError + '_ {
    move |source| SynthError::Io { path: path.to_path_buf(), source }
}

/// Writes `n_patients` synthetic patients (one visit each, one or two
/// recordings) as 16-bit WAV files plus `manifest.csv` and `truth.csv`
/// under `out_dir`.
///
/// Patient `i` draws everything from its own stream of `base_seed`, so the
/// corpus is byte-identical for a given seed regardless of thread count.
pub fn generate_dataset(
    out_dir: &Path,
    n_patients: usize,
    dist: &MonthDistribution,
    base_seed: u64,
    opts: &DatasetOptions,
) -> Result<SynthDataset, SynthError> {
    if n_patients < 10 {
        return Err(SynthError::InvalidConfig(format!("{n_patients} patients; at least 10 are required")));
    }
    let counts = month_counts(n_patients, dist)?;
    let mut months: Vec<u8> = counts.iter().enumerate().flat_map(|(i, &c)| std::iter::repeat_n(5 + i as u8, c)).collect();
    months.shuffle(&mut ChaCha8Rng::seed_from_u64(base_seed));

    let audio_dir = out_dir.join("audio");
    std::fs::create_dir_all(&audio_dir).map_err(io_err(&audio_dir))?;

    let patients: Vec<Patient> = months
        .par_iter()
        .enumerate()
        .map(|(i, &month)| synth_patient(i, month, base_seed, opts, &audio_dir))
        .collect::<Result<_, _>>()?;

    let manifest = DatasetManifest {
        entries: patients.iter().flat_map(|p| p.entries.iter().cloned()).collect(),
        base_dir: out_dir.to_path_buf(),
    };
    let manifest_path = out_dir.join("manifest.csv");
    write_manifest(&manifest_path, &manifest)?;

    let truth: Vec<TruthRow> = patients.into_iter().map(|p| p.truth).collect();
    let mut text = String::from(TRUTH_HEADER);
    text.push('\n');
    for t in &truth {
        let _ = writeln!(text, "{},{},{}", t.patient_id, t.true_ga, t.eta);
    }
    let truth_path = out_dir.join("truth.csv");
    std::fs::write(&truth_path, text).map_err(io_err(&truth_path))?;
    Ok(SynthDataset { manifest, truth, manifest_path, truth_path })
}

fn synth_patient(index: usize, month: u8, base_seed: u64, opts: &DatasetOptions, audio_dir: &Path) -> Result<Patient, SynthError> {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(index as u64 + 1);
    let m = f64::from(month);
    let true_ga = rng.random_range(m - 0.5..m + 0.5).clamp(5.0, 9.0);
    let (label, eta) = draw_presumed_label(true_ga, opts.eta_std_months, &mut rng);
    let patient_id = format!("P{:04}", index + 1);
    let visit_id = "V1".to_string();
    let n_rec = if rng.random::<f64>() < SECOND_RECORDING_P { 2 } else { 1 };
    let cfg = SynthConfig {
        ga_months: true_ga,
        duration_s: opts.duration_s,
        fs_hz: opts.fs_hz,
        snr_db: opts.snr_db,
        eta_std_months: opts.eta_std_months,
        seed: base_seed,
    };
    let mut entries = Vec::with_capacity(n_rec);
    for r in 1..=n_rec {
        let rec = synth_recording(&cfg, eta, &mut rng)?;
        let name = format!("{patient_id}_{visit_id}_R{r}.wav");
        let scaled: Vec<f64> = rec.audio.samples().iter().map(|v| v * WAV_GAIN).collect();
        let audio = AudioRecording::new(scaled, opts.fs_hz)?;
        write_wav_pcm16(&audio_dir.join(&name), &audio)?;
        entries.push(ManifestEntry {
            file_path: format!("audio/{name}"),
            patient_id: patient_id.clone(),
            visit_id: visit_id.clone(),
            ga_months_lmp: label,
        });
    }
    Ok(Patient { truth: TruthRow { patient_id, true_ga, eta }, entries })
}
