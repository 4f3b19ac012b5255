//! Cross-validation protocol invariants.

mod common;

use std::collections::{BTreeMap, HashSet};

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::corpus::random_corpus as corpus;
use dopplerga::clstm::NetworkConfig;
use dopplerga::training::{
    balanced_batches, percentile, run_trials, stratified_kfold, CrossvalConfig, TrainConfig,
};

const CLINICAL_COUNTS: [usize; 5] = [15, 77, 162, 186, 253];

#[test]
fn balanced_batches_equalize_class_frequency() {
    let ex = corpus(CLINICAL_COUNTS, 1, 1, 0);
    let pool: Vec<usize> = (0..ex.len()).collect();
    let classes = [5, 6, 7, 8, 9];
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut hist = BTreeMap::new();
    let mut total = 0usize;
    while total < 10_000 {
        for b in balanced_batches(&ex, &pool, &classes, 32, &mut rng).unwrap() {
            assert_eq!(b.len(), 32);
            for i in b {
                *hist.entry(ex[i].ga_months).or_insert(0usize) += 1;
                total += 1;
            }
        }
    }
    for (m, c) in &hist {
        let f = *c as f64 / total as f64;
        assert!((f - 0.2).abs() <= 0.01, "month {m}: {f} over {total}");
    }
    assert_eq!(hist.len(), 5);
}

#[test]
fn folds_never_leak_patients_and_meet_quotas() {
    let ex = corpus([7, 16, 30, 41, 50], 2, 1, 2);
    let patients: HashSet<&str> = ex.iter().map(|e| e.patient_id.as_str()).collect();
    let k = 5;
    for seed in 0..50 {
        let fa = stratified_kfold(&ex, k, seed).unwrap();
        assert_eq!(fa.k(), k);
        let mut seen = HashSet::new();
        for i in 0..k {
            let (train, test) = fa.split(&ex, i);
            let tr: HashSet<&str> = train.iter().map(|&j| ex[j].patient_id.as_str()).collect();
            let te: HashSet<&str> = test.iter().map(|&j| ex[j].patient_id.as_str()).collect();
            assert!(tr.is_disjoint(&te), "seed {seed} fold {i} leaks");
            assert_eq!(train.len() + test.len(), ex.len());
            seen.extend(te);

            let mut per_month: BTreeMap<u8, HashSet<&str>> = BTreeMap::new();
            for &j in &test {
                per_month.entry(ex[j].ga_months).or_default().insert(&ex[j].patient_id);
            }
            for (m, n) in [7usize, 16, 30, 41, 50].iter().enumerate() {
                let got = per_month.get(&(5 + m as u8)).map_or(0, |s| s.len()) as f64;
                let ideal = *n as f64 / k as f64;
                assert!((got - ideal).abs() <= 1.0, "seed {seed} fold {i} month {}: {got} vs {ideal}", 5 + m);
            }
        }
        assert_eq!(seen, patients);
    }
}

fn tiny_cv(seed: u64) -> CrossvalConfig {
    CrossvalConfig {
        n_trials: 3,
        k: 3,
        base_seed: seed,
        train: TrainConfig {
            net: NetworkConfig {
                timesteps: 3,
                width: 8,
                hidden_channels: (2, 2),
                kernel_widths: (3, 3),
                ..Default::default()
            },
            epochs: 2,
            batch_size: 8,
            ..Default::default()
        },
    }
}

#[test]
fn trial_report_is_reproducible_and_ordered() {
    let ex = corpus([4, 5, 6, 5, 4], 1, 30, 3);
    let a = run_trials(&ex, &tiny_cv(11)).unwrap();
    let b = run_trials(&ex, &tiny_cv(11)).unwrap();
    assert_eq!(a.to_json(), b.to_json());
    assert_eq!(a.render_table(), b.render_table());
    let c = run_trials(&ex, &tiny_cv(12)).unwrap();
    assert_ne!(a.to_json(), c.to_json());

    assert!(!a.flagged);
    let overall: Vec<f64> = a.trials.iter().map(|t| t.overall).collect();
    let mut sorted = overall.clone();
    sorted.sort_by(f64::total_cmp);
    // n = 3: median is the middle order statistic; 2.5% lies 5% of the way
    // from the first to the second.
    assert_eq!(a.overall[1], sorted[1]);
    assert!((a.overall[0] - (sorted[0] + 0.05 * (sorted[1] - sorted[0]))).abs() < 1e-15);
    for cell in a.per_month.values().chain([&a.overall]) {
        assert!(cell[0] <= cell[1] && cell[1] <= cell[2], "{cell:?}");
    }
    let one = run_trials(&ex, &CrossvalConfig { n_trials: 1, ..tiny_cv(11) }).unwrap();
    for cell in one.per_month.values() {
        assert!(cell[0] == cell[1] && cell[1] == cell[2]);
    }
}

proptest! {
    #[test]
    fn percentile_matches_sorted_oracle(mut v in prop::collection::vec(-1e3f64..1e3, 1..60), p in 0.0f64..=1.0) {
        let got = percentile(&v, p);
        v.sort_by(f64::total_cmp);
        let pos = (v.len() - 1) as f64 * p;
        let (lo, frac) = (pos.floor() as usize, pos - pos.floor());
        let want = if lo + 1 < v.len() { v[lo] * (1.0 - frac) + v[lo + 1] * frac } else { v[lo] };
        prop_assert!((got - want).abs() <= 1e-9 * (1.0 + want.abs()));
        prop_assert!(v[0] <= got && got <= v[v.len() - 1]);
    }
}
