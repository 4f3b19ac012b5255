use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::folds::stratified_kfold;
use super::trainer::{score_predictions, train_model, TrainConfig, VisitScore};
use super::{evaluate, LabeledExample, TrainError};

#[derive(Debug, Clone, PartialEq)]
pub struct CrossvalConfig {
    pub n_trials: usize,
    pub k: usize,
    pub base_seed: u64,
    pub train: TrainConfig,
}

impl Default for CrossvalConfig {
    fn default() -> Self {
        Self { n_trials: 50, k: 5, base_seed: 0, train: TrainConfig::default() }
    }
}

/// Independent 64-bit seed for `(trial, slot)` under `base`.
fn derive_seed(base: u64, trial: usize, slot: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(((trial as u64) << 32) | slot);
    rng.next_u64()
}

const FOLD_SLOT: u64 = 0xFFFF_FFFF;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialOutcome {
    pub trial: usize,
    pub fold_seed: u64,
    /// Per fold: `(trainer seed, network init seed)`.
    pub fold_training_seeds: Vec<(u64, u64)>,
    pub failed: bool,
    pub error: Option<String>,
    pub per_month: BTreeMap<u8, f64>,
    pub overall: f64,
    /// Best constant predictor of the pooled held-out labels (their median).
    pub baseline_constant: f64,
    pub baseline_overall: f64,
    /// Final-epoch training MAE of each fold.
    pub final_train_mae: Vec<f64>,
    pub visits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialReport {
    pub n_trials: usize,
    pub n_folds: usize,
    pub base_seed: u64,
    pub epochs: usize,
    /// `[lci, median, uci]` per month over successful trials.
    pub per_month: BTreeMap<u8, [f64; 3]>,
    pub overall: [f64; 3],
    pub baseline_overall: [f64; 3],
    pub failed_trials: usize,
    pub flagged: bool,
    pub trials: Vec<TrialOutcome>,
}

/// Linear interpolation between order statistics at position `(n - 1) p`.
///
/// # Panics
/// If `values` is empty or `p` is outside `[0, 1]`.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    assert!(!values.is_empty(), "percentile of an empty set");
    assert!((0.0..=1.0).contains(&p));
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = (v.len() - 1) as f64 * p;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

fn interval(values: &[f64]) -> [f64; 3] {
    if values.is_empty() {
        return [f64::NAN; 3];
    }
    [percentile(values, 0.025), percentile(values, 0.5), percentile(values, 0.975)]
}

struct FoldResult {
    visits: Vec<VisitScore>,
    final_train_mae: f64,
}

/// `n_trials` independent k-fold cross-validations. Folds of all trials run in
/// parallel; results are assembled in fixed order, so the report depends only
/// on the data and seeds.
///
/// A failing fold marks its trial failed and flags the report; the remaining
/// trials are still reported.
pub fn run_trials(dataset: &[LabeledExample], cfg: &CrossvalConfig) -> Result<TrialReport, TrainError> {
    cfg.train.validate()?;
    if cfg.n_trials == 0 {
        return Err(TrainError::InvalidConfig("at least one trial is required".into()));
    }
    let mut assignments = Vec::with_capacity(cfg.n_trials);
    for trial in 0..cfg.n_trials {
        let fold_seed = derive_seed(cfg.base_seed, trial, FOLD_SLOT);
        assignments.push((fold_seed, stratified_kfold(dataset, cfg.k, fold_seed)?));
    }
    let jobs: Vec<(usize, usize)> = (0..cfg.n_trials).flat_map(|t| (0..cfg.k).map(move |f| (t, f))).collect();
    let seeds = |t: usize, f: usize| (derive_seed(cfg.base_seed, t, 2 * f as u64), derive_seed(cfg.base_seed, t, 2 * f as u64 + 1));

    let results: Vec<Result<FoldResult, TrainError>> = jobs
        .par_iter()
        .map(|&(t, f)| {
            let (idx_train, idx_test) = assignments[t].1.split(dataset, f);
            let train: Vec<LabeledExample> = idx_train.iter().map(|&i| dataset[i].clone()).collect();
            let test: Vec<LabeledExample> = idx_test.iter().map(|&i| dataset[i].clone()).collect();
            let (trainer_seed, init_seed) = seeds(t, f);
            let mut tc = cfg.train.clone();
            tc.net.seed = init_seed;
            let mut rng = ChaCha8Rng::seed_from_u64(trainer_seed);
            let out = train_model(&train, &[], &tc, &mut rng)?;
            let eval = evaluate(&out.model, &test)?;
            log::info!("trial {t} fold {f}: held-out MAE {:.3}", eval.overall);
            Ok(FoldResult { visits: eval.visits, final_train_mae: out.history.last().map_or(f64::NAN, |h| h.train_mae) })
        })
        .collect();

    let mut trials = Vec::with_capacity(cfg.n_trials);
    let mut results = results.into_iter();
    for (t, (fold_seed, _)) in assignments.iter().enumerate() {
        let mut pooled = Vec::new();
        let mut final_train_mae = Vec::new();
        let mut error = None;
        for _ in 0..cfg.k {
            match results.next().expect("one result per job") {
                Ok(r) => {
                    pooled.extend(r.visits);
                    final_train_mae.push(r.final_train_mae);
                }
                Err(e) => {
                    log::warn!("trial {t} failed: {e}");
                    error.get_or_insert_with(|| e.to_string());
                }
            }
        }
        let scored = score_predictions(&pooled);
        let labels: Vec<f64> = pooled.iter().map(|v| f64::from(v.label)).collect();
        let baseline_constant = if labels.is_empty() { f64::NAN } else { percentile(&labels, 0.5) };
        let baseline_overall = labels.iter().map(|l| (l - baseline_constant).abs()).sum::<f64>() / labels.len() as f64;
        trials.push(TrialOutcome {
            trial: t,
            fold_seed: *fold_seed,
            fold_training_seeds: (0..cfg.k).map(|f| seeds(t, f)).collect(),
            failed: error.is_some(),
            error,
            per_month: scored.per_month,
            overall: scored.overall,
            baseline_constant,
            baseline_overall,
            final_train_mae,
            visits: pooled.len(),
        });
    }

    let ok: Vec<&TrialOutcome> = trials.iter().filter(|t| !t.failed).collect();
    let months: std::collections::BTreeSet<u8> = ok.iter().flat_map(|t| t.per_month.keys().copied()).collect();
    let per_month = months
        .into_iter()
        .map(|m| {
            let vals: Vec<f64> = ok.iter().filter_map(|t| t.per_month.get(&m).copied()).collect();
            (m, interval(&vals))
        })
        .collect();
    let failed_trials = trials.len() - ok.len();
    Ok(TrialReport {
        n_trials: cfg.n_trials,
        n_folds: cfg.k,
        base_seed: cfg.base_seed,
        epochs: cfg.train.epochs,
        per_month,
        overall: interval(&ok.iter().map(|t| t.overall).collect::<Vec<_>>()),
        baseline_overall: interval(&ok.iter().map(|t| t.baseline_overall).collect::<Vec<_>>()),
        failed_trials,
        flagged: failed_trials > 0,
        trials,
    })
}

impl TrialReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Aligned table: one row per month plus the overall row, columns LCI,
    /// median and UCI of the MAE in months.
    pub fn render_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<12}{:>8}{:>8}{:>8}", "GA (months)", "LCI", "Median", "UCI");
        let row = |s: &mut String, label: &str, v: &[f64; 3]| {
            let _ = writeln!(s, "{label:<12}{:>8.2}{:>8.2}{:>8.2}", v[0], v[1], v[2]);
        };
        for (m, v) in &self.per_month {
            row(&mut s, &m.to_string(), v);
        }
        row(&mut s, "Overall", &self.overall);
        row(&mut s, "Constant", &self.baseline_overall);
        let _ = writeln!(
            s,
            "{} trials x {} folds, {} epochs, base seed {}{}",
            self.n_trials,
            self.n_folds,
            self.epochs,
            self.base_seed,
            if self.flagged { format!(", {} FAILED", self.failed_trials) } else { String::new() }
        );
        s
    }
}
