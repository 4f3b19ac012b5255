
use rand::seq::SliceRandom;
use rand::Rng;

use super::{LabeledExample, TrainError};

/// One epoch of class-balanced batches over `pool` (indices into `examples`).
///
/// The epoch has `ceil(C * n_max / batch_size)` full batches, `C` being the
/// number of `classes` and `n_max` the largest class count. Slots are split
/// as evenly as possible between classes; a largest class fills its share
/// with a permutation of all its examples (topped up by draws with
/// replacement), every other class draws with replacement. Slots are then
/// shuffled and, where possible, rearranged so no patient appears twice in
/// one batch.
pub fn balanced_batches<R: Rng>(
    examples: &[LabeledExample],
    pool: &[usize],
    classes: &[u8],
    batch_size: usize,
    rng: &mut R,
) -> Result<Vec<Vec<usize>>, TrainError> {
    if batch_size == 0 {
        return Err(TrainError::InvalidConfig("batch size must be positive".into()));
    }
    if classes.is_empty() {
        return Err(TrainError::InvalidConfig("no classes to balance".into()));
    }
    let by_class: Vec<Vec<usize>> =
        classes.iter().map(|&c| pool.iter().copied().filter(|&i| examples[i].ga_months == c).collect()).collect();
    if let Some(pos) = by_class.iter().position(Vec::is_empty) {
        return Err(TrainError::EmptyClass(classes[pos]));
    }
    let n_max = by_class.iter().map(Vec::len).max().unwrap();
    let n_classes = classes.len();
    let n_batches = (n_classes * n_max).div_ceil(batch_size);
    let total = n_batches * batch_size;

    // Even split; the leftover slots go to randomly chosen classes.
    let mut share = vec![total / n_classes; n_classes];
    let mut order: Vec<usize> = (0..n_classes).collect();
    order.shuffle(rng);
    for &c in order.iter().take(total % n_classes) {
        share[c] += 1;
    }

    let mut slots = Vec::with_capacity(total);
    for (members, &quota) in by_class.iter().zip(&share) {
        let mut drawn = 0;
        if members.len() == n_max {
            let mut perm = members.clone();
            perm.shuffle(rng);
            slots.extend_from_slice(&perm);
            drawn = n_max;
        }
        for _ in drawn..quota {
            slots.push(members[rng.random_range(0..members.len())]);
        }
    }
    slots.shuffle(rng);
    separate_patients(examples, &mut slots, batch_size);
    Ok(slots.chunks(batch_size).map(<[usize]>::to_vec).collect())
}

/// Swap pass pushing repeated patients out of each batch. A duplicate is
/// exchanged with any slot of another batch when neither batch ends up with
/// a repeat; where no such slot exists the duplicate stays.
fn separate_patients(examples: &[LabeledExample], slots: &mut [usize], batch_size: usize) {
    let patient = |i: usize| examples[i].patient_id.as_str();
    let n = slots.len();
    let batch_of = |j: usize| (j / batch_size * batch_size)..((j / batch_size + 1) * batch_size).min(n);
    for pos in 0..n {
        let here = batch_of(pos);
        let dup = patient(slots[pos]);
        if !here.clone().any(|q| q != pos && patient(slots[q]) == dup) {
            continue;
        }
        let candidate = (0..n).filter(|j| !here.contains(j)).find(|&j| {
            let pj = patient(slots[j]);
            !here.clone().any(|q| q != pos && patient(slots[q]) == pj)
                && !batch_of(j).any(|q| q != j && patient(slots[q]) == dup)
        });
        if let Some(j) = candidate {
            slots.swap(pos, j);
        }
    }
}
