use crate::clstm::Tensor;

use super::TrainError;

pub const DEFAULT_LEARNING_RATE: f64 = 1e-3;
pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Adam moment accumulators, one pair per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub step: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl OptimizerState {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Tensor>, learning_rate: f64) -> Self {
        let m: Vec<Tensor> = params.into_iter().map(|t| Tensor::zeros(t.shape())).collect();
        Self {
            v: m.clone(),
            m,
            step: 0,
            learning_rate,
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            eps: ADAM_EPS,
        }
    }
}

/// Bias-corrected Adam update, applied in place. Nothing is modified when a
/// gradient is non-finite or a shape disagrees.
pub fn adam_step(params: &mut [&mut Tensor], grads: &[Tensor], opt: &mut OptimizerState) -> Result<(), TrainError> {
    if params.len() != grads.len() || params.len() != opt.m.len() {
        return Err(TrainError::ShapeMismatch(format!(
            "{} parameters, {} gradients, {} moments",
            params.len(),
            grads.len(),
            opt.m.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || p.shape() != opt.m[i].shape() {
            return Err(TrainError::ShapeMismatch(format!("tensor {i}: {:?} vs {:?}", p.shape(), g.shape())));
        }
        if !g.is_finite() {
            return Err(TrainError::NonFiniteGradient(format!("tensor {i}")));
        }
    }
    opt.step += 1;
    let t = opt.step as i32;
    let c1 = 1.0 - opt.beta1.powi(t);
    let c2 = 1.0 - opt.beta2.powi(t);
    let (b1, b2, lr, eps) = (opt.beta1, opt.beta2, opt.learning_rate, opt.eps);
    for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(opt.m.iter_mut().zip(opt.v.iter_mut())) {
        for (((w, &gv), mv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(m.data_mut()).zip(v.data_mut()) {
            *mv = b1 * *mv + (1.0 - b1) * gv;
            *vv = b2 * *vv + (1.0 - b2) * gv * gv;
            *w -= lr * (*mv / c1) / ((*vv / c2).sqrt() + eps);
        }
    }
    Ok(())
}
