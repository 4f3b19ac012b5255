use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use serde::Serialize;

use super::batches::balanced_batches;
use super::optim::{adam_step, OptimizerState, DEFAULT_LEARNING_RATE};
use super::{LabeledExample, TrainError, DIVERGENCE_LOSS, GA_MONTHS};
use crate::clstm::{loss_and_gradients, predict, shape_input, stack_batch, ModelState, NetError, NetworkConfig, Tensor};
use crate::features::{compute_normalization_stats, normalize_features, NormalizationStats};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub net: NetworkConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Months to balance; `None` balances the months present in the
    /// training set.
    pub classes: Option<Vec<u8>>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            net: NetworkConfig::default(),
            epochs: 300,
            batch_size: 32,
            learning_rate: DEFAULT_LEARNING_RATE,
            classes: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        self.net.validate()?;
        if self.batch_size < 2 {
            return Err(TrainError::InvalidConfig(format!("batch size {} (batch norm needs at least 2)", self.batch_size)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::InvalidConfig(format!("learning rate {}", self.learning_rate)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean regularized loss over the epoch's batches.
    pub train_loss: f64,
    /// Mean batch MAE (train-mode forward, dropout active).
    pub train_mae: f64,
    /// Per-visit validation MAE after the epoch, when a validation set is given.
    pub val_mae: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ModelState,
    pub history: Vec<EpochStats>,
}

/// Normalizes and shapes every example into a network input.
pub(crate) fn prepare_inputs(
    examples: &[LabeledExample],
    stats: &NormalizationStats,
    cfg: &NetworkConfig,
) -> Result<Vec<Tensor>, NetError> {
    examples.iter().map(|e| shape_input(&normalize_features(&e.features, stats), cfg)).collect()
}

/// Trains a fresh model (initialized from `cfg.net.seed`) for `cfg.epochs`
/// epochs of balanced batches. Normalization statistics are fitted on the
/// training set only. Returns the final-epoch model.
pub fn train_model<R: Rng>(
    train: &[LabeledExample],
    val: &[LabeledExample],
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(TrainError::InvalidConfig("empty training set".into()));
    }
    let seqs: Vec<_> = train.iter().map(|e| (*e.features).clone()).collect();
    let stats = compute_normalization_stats(&seqs)?;
    drop(seqs);

    let mut model = ModelState::new(cfg.net.clone())?;
    model.norm_stats = stats;
    model.learning_rate = cfg.learning_rate;
    let inputs = prepare_inputs(train, &stats, &cfg.net)?;
    let val_inputs = prepare_inputs(val, &stats, &cfg.net)?;

    let classes: Vec<u8> = match &cfg.classes {
        Some(c) => c.clone(),
        None => GA_MONTHS.iter().copied().filter(|m| train.iter().any(|e| e.ga_months == *m)).collect(),
    };
    let pool: Vec<usize> = (0..train.len()).collect();
    let mut opt = OptimizerState::new(model.learnable().into_iter().map(|(_, t)| t), cfg.learning_rate);
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let batches = balanced_batches(train, &pool, &classes, cfg.batch_size, rng)?;
        let (mut loss_sum, mut mae_sum) = (0.0, 0.0);
        for batch in &batches {
            let items: Vec<&Tensor> = batch.iter().map(|&i| &inputs[i]).collect();
            let x = stack_batch(&items)?;
            let labels: Vec<f64> = batch.iter().map(|&i| f64::from(train[i].ga_months)).collect();
            let out = match loss_and_gradients(&x, &labels, &model, rng) {
                Ok(o) => o,
                Err(NetError::NonFinite { .. }) => {
                    return Err(TrainError::Diverged { epoch, loss: f64::NAN, history });
                }
                Err(e) => return Err(e.into()),
            };
            if !(out.loss <= DIVERGENCE_LOSS) {
                return Err(TrainError::Diverged { epoch, loss: out.loss, history });
            }
            let mut params = model.learnable_mut();
            match adam_step(&mut params, &out.gradients.tensors, &mut opt) {
                Ok(()) => {}
                Err(TrainError::NonFiniteGradient(_)) => {
                    return Err(TrainError::Diverged { epoch, loss: out.loss, history });
                }
                Err(e) => return Err(e),
            }
            model.apply_batch_stats(&out.batch_stats);
            loss_sum += out.loss;
            mae_sum += out.mae;
        }
        model.epochs_trained = (epoch + 1) as u32;
        let n = batches.len() as f64;
        let val_mae = if val.is_empty() {
            None
        } else {
            let preds = predict_inputs(&model, &val_inputs, cfg.batch_size)?;
            Some(score_predictions(&aggregate_visits(val, &preds)).overall)
        };
        log::debug!("epoch {epoch}: loss {:.4} mae {:.4} val {val_mae:?}", loss_sum / n, mae_sum / n);
        history.push(EpochStats { epoch, train_loss: loss_sum / n, train_mae: mae_sum / n, val_mae });
    }
    Ok(TrainOutcome { model, history })
}

/// Inference-mode predictions for already shaped inputs, in chunks.
pub(crate) fn predict_inputs(model: &ModelState, inputs: &[Tensor], chunk: usize) -> Result<Vec<f64>, NetError> {
    let mut out = Vec::with_capacity(inputs.len());
    for part in inputs.chunks(chunk.max(1)) {
        let refs: Vec<&Tensor> = part.iter().collect();
        out.extend(predict(&stack_batch(&refs)?, model)?);
    }
    Ok(out)
}

/// One visit: the mean of its recordings' predictions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VisitScore {
    pub patient_id: String,
    pub visit_id: String,
    pub label: u8,
    pub prediction: f64,
    pub recordings: usize,
}

/// Averages per-recording predictions within each `(patient, visit)`, in
/// order of first appearance.
pub(crate) fn aggregate_visits(examples: &[LabeledExample], preds: &[f64]) -> Vec<VisitScore> {
    let mut index: HashMap<(&str, &str), usize> = HashMap::new();
    let mut visits: Vec<VisitScore> = Vec::new();
    for (e, &p) in examples.iter().zip(preds) {
        let key = (e.patient_id.as_str(), e.visit_id.as_str());
        let i = *index.entry(key).or_insert_with(|| {
            visits.push(VisitScore {
                patient_id: e.patient_id.clone(),
                visit_id: e.visit_id.clone(),
                label: e.ga_months,
                prediction: 0.0,
                recordings: 0,
            });
            visits.len() - 1
        });
        visits[i].prediction += p;
        visits[i].recordings += 1;
    }
    for v in &mut visits {
        v.prediction /= v.recordings as f64;
    }
    visits
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalResult {
    /// MAE per presumed-GA month (months with at least one visit).
    pub per_month: BTreeMap<u8, f64>,
    /// Unweighted mean absolute error over all visits.
    pub overall: f64,
    pub visits: Vec<VisitScore>,
}

/// Per-month and overall MAE of visit-level predictions.
pub fn score_predictions(visits: &[VisitScore]) -> EvalResult {
    let mut sums: BTreeMap<u8, (f64, usize)> = BTreeMap::new();
    let mut total = 0.0;
    for v in visits {
        let err = (v.prediction - f64::from(v.label)).abs();
        let s = sums.entry(v.label).or_default();
        s.0 += err;
        s.1 += 1;
        total += err;
    }
    EvalResult {
        per_month: sums.into_iter().map(|(m, (s, n))| (m, s / n as f64)).collect(),
        overall: if visits.is_empty() { f64::NAN } else { total / visits.len() as f64 },
        visits: visits.to_vec(),
    }
}

/// Scores `model` on `examples`, averaging recordings of a visit first.
pub fn evaluate(model: &ModelState, examples: &[LabeledExample]) -> Result<EvalResult, TrainError> {
    let inputs = prepare_inputs(examples, &model.norm_stats, &model.config)?;
    let preds = predict_inputs(model, &inputs, 32)?;
    Ok(score_predictions(&aggregate_visits(examples, &preds)))
}
