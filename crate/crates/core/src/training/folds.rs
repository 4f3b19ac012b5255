use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{LabeledExample, TrainError};

/// `k` disjoint patient lists covering every patient.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    pub folds: Vec<Vec<String>>,
}

impl FoldAssignment {
    pub fn k(&self) -> usize {
        self.folds.len()
    }

    pub fn fold_of(&self, patient_id: &str) -> Option<usize> {
        self.folds.iter().position(|f| f.iter().any(|p| p == patient_id))
    }

    /// `(train, test)` example indices for fold `i`.
    pub fn split(&self, examples: &[LabeledExample], i: usize) -> (Vec<usize>, Vec<usize>) {
        let test: std::collections::HashSet<&str> = self.folds[i].iter().map(String::as_str).collect();
        (0..examples.len()).partition(|&j| !test.contains(examples[j].patient_id.as_str()))
    }
}

/// Modal month of each patient's recordings; ties go to the lower month.
pub(crate) fn patient_months(examples: &[LabeledExample]) -> BTreeMap<String, u8> {
    let mut counts: HashMap<&str, BTreeMap<u8, usize>> = HashMap::new();
    for e in examples {
        *counts.entry(&e.patient_id).or_default().entry(e.ga_months).or_default() += 1;
    }
    counts
        .into_iter()
        .map(|(p, hist)| {
            let best = hist.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0))).map(|(&m, _)| m).unwrap();
            (p.to_owned(), best)
        })
        .collect()
}

/// Patient-level stratified split.
///
/// Patients are grouped by modal month, shuffled within each month and dealt
/// round-robin into folds, the starting fold rotating from one month to the
/// next. Every month, however small, therefore lands within one patient of
/// its ideal per-fold quota, and fold sizes differ by at most one.
pub fn stratified_kfold(examples: &[LabeledExample], k: usize, seed: u64) -> Result<FoldAssignment, TrainError> {
    if k < 2 {
        return Err(TrainError::InvalidConfig(format!("k = {k}; at least 2 folds are required")));
    }
    let months = patient_months(examples);
    if months.len() < k {
        return Err(TrainError::TooFewPatients { patients: months.len(), folds: k });
    }
    let mut strata: BTreeMap<u8, Vec<String>> = BTreeMap::new();
    for (p, m) in months {
        strata.entry(m).or_default().push(p);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    let mut offset = 0;
    for patients in strata.values_mut() {
        patients.shuffle(&mut rng);
        for (j, p) in patients.iter().enumerate() {
            folds[(offset + j) % k].push(p.clone());
        }
        offset = (offset + patients.len()) % k;
    }
    Ok(FoldAssignment { folds })
}
