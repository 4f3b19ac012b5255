//! In-memory labeled corpora with random feature frames.

use std::sync::Arc;

use dopplerga::features::{FeatureFrame, FeatureSequence};
use dopplerga::training::LabeledExample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `counts[m]` patients of month `5 + m`, each with `recs` recordings of
/// `frames` random frames whose first feature leans with the month.
pub fn random_corpus(counts: [usize; 5], recs: usize, frames: usize, seed: u64) -> Vec<LabeledExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut pid = 0;
    for (m, &n) in counts.iter().enumerate() {
        for _ in 0..n {
            pid += 1;
            for r in 0..recs {
                let seq = FeatureSequence {
                    frames: (0..frames)
                        .map(|_| {
                            let v = [m as f64 + rng.random_range(-1.0..1.0), rng.random(), rng.random(), rng.random()];
                            FeatureFrame::from_values(v, true)
                        })
                        .collect(),
                    recording_id: format!("P{pid}_R{r}"),
                    start_offset_samples: 0,
                };
                out.push(LabeledExample {
                    patient_id: format!("P{pid}"),
                    visit_id: "V1".into(),
                    recording_id: format!("P{pid}_R{r}"),
                    ga_months: 5 + m as u8,
                    features: Arc::new(seq),
                });
            }
        }
    }
    out
}
