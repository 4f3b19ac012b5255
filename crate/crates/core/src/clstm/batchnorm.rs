use super::{Mode, NetError, Tensor};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormParams {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    pub eps: f64,
    pub momentum: f64,
}

impl BatchNormParams {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Tensor::scalar_fill(&[channels], 1.0),
            beta: Tensor::zeros(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::scalar_fill(&[channels], 1.0),
            eps: BN_EPS,
            momentum: BN_MOMENTUM,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    /// `running = (1 - momentum) * running + momentum * batch`, with the
    /// unbiased batch variance.
    pub fn apply_batch_stats(&mut self, stats: &BatchStats) {
        let m = self.momentum;
        for (r, &b) in self.running_mean.data_mut().iter_mut().zip(&stats.mean) {
            *r = (1.0 - m) * *r + m * b;
        }
        for (r, &b) in self.running_var.data_mut().iter_mut().zip(&stats.var_unbiased) {
            *r = (1.0 - m) * *r + m * b;
        }
    }
}

/// Per-channel statistics of one training batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    pub var_unbiased: Vec<f64>,
}

/// Data viewed as `[outer][channels][inner]`; statistics run over `outer` and `inner`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct BnLayout {
    pub outer: usize,
    pub channels: usize,
    pub inner: usize,
}

impl BnLayout {
    fn count(&self) -> usize {
        self.outer * self.inner
    }

    fn channel_blocks<'a>(&self, x: &'a [f64], c: usize) -> impl Iterator<Item = &'a [f64]> + 'a {
        let (inner, channels) = (self.inner, self.channels);
        (0..self.outer).map(move |o| &x[(o * channels + c) * inner..(o * channels + c + 1) * inner])
    }
}

pub(crate) struct BnTrace {
    pub xhat: Vec<f64>,
    pub inv_std: Vec<f64>,
}

pub(crate) fn bn_forward_train(p: &BatchNormParams, layout: BnLayout, x: &[f64]) -> (Vec<f64>, BnTrace, BatchStats) {
    let n = layout.count() as f64;
    let mut mean = vec![0.0; layout.channels];
    let mut var = vec![0.0; layout.channels];
    for c in 0..layout.channels {
        let s: f64 = layout.channel_blocks(x, c).map(|b| b.iter().sum::<f64>()).sum();
        mean[c] = s / n;
        let m = mean[c];
        var[c] = layout.channel_blocks(x, c).map(|b| b.iter().map(|v| (v - m) * (v - m)).sum::<f64>()).sum::<f64>() / n;
    }
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + p.eps).sqrt()).collect();
    let mut xhat = vec![0.0; x.len()];
    let mut y = vec![0.0; x.len()];
    let (g, bt) = (p.gamma.data(), p.beta.data());
    for o in 0..layout.outer {
        for c in 0..layout.channels {
            let r = (o * layout.channels + c) * layout.inner..(o * layout.channels + c + 1) * layout.inner;
            for j in r {
                let xh = (x[j] - mean[c]) * inv_std[c];
                xhat[j] = xh;
                y[j] = g[c] * xh + bt[c];
            }
        }
    }
    let var_unbiased = var.iter().map(|v| v * n / (n - 1.0)).collect();
    (y, BnTrace { xhat, inv_std }, BatchStats { mean, var_unbiased })
}

pub(crate) fn bn_forward_infer(p: &BatchNormParams, layout: BnLayout, x: &[f64]) -> Vec<f64> {
    let (g, bt) = (p.gamma.data(), p.beta.data());
    let (rm, rv) = (p.running_mean.data(), p.running_var.data());
    let scale: Vec<f64> = (0..layout.channels).map(|c| g[c] / (rv[c] + p.eps).sqrt()).collect();
    let mut y = vec![0.0; x.len()];
    for o in 0..layout.outer {
        for c in 0..layout.channels {
            let r = (o * layout.channels + c) * layout.inner..(o * layout.channels + c + 1) * layout.inner;
            for j in r {
                y[j] = (x[j] - rm[c]) * scale[c] + bt[c];
            }
        }
    }
    y
}

/// Returns `(dx, dgamma, dbeta)`.
pub(crate) fn bn_backward(p: &BatchNormParams, layout: BnLayout, trace: &BnTrace, dy: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = layout.count() as f64;
    let g = p.gamma.data();
    let mut dgamma = vec![0.0; layout.channels];
    let mut dbeta = vec![0.0; layout.channels];
    for c in 0..layout.channels {
        for (dyb, xb) in layout.channel_blocks(dy, c).zip(layout.channel_blocks(&trace.xhat, c)) {
            for (d, xh) in dyb.iter().zip(xb) {
                dbeta[c] += d;
                dgamma[c] += d * xh;
            }
        }
    }
    let mut dx = vec![0.0; dy.len()];
    for o in 0..layout.outer {
        for c in 0..layout.channels {
            let k = g[c] * trace.inv_std[c] / n;
            let r = (o * layout.channels + c) * layout.inner..(o * layout.channels + c + 1) * layout.inner;
            for j in r {
                dx[j] = k * (n * dy[j] - dbeta[c] - trace.xhat[j] * dgamma[c]);
            }
        }
    }
    (dx, dgamma, dbeta)
}

/// Batch normalization of `(B, C, 1, W)` activations, per channel over B and W.
/// Train mode uses batch statistics and updates the running estimates.
pub fn batchnorm_forward(x: &Tensor, p: &mut BatchNormParams, mode: Mode) -> Result<Tensor, NetError> {
    let s = x.shape();
    if s.len() != 4 || s[1] != p.channels() || s[2] != 1 {
        return Err(NetError::ShapeMismatch(format!("batchnorm input: expected (B, {}, 1, W), got {s:?}", p.channels())));
    }
    let layout = BnLayout { outer: s[0], channels: s[1], inner: s[3] };
    let y = match mode {
        Mode::Train => {
            if s[0] < 2 {
                return Err(NetError::BatchTooSmall(s[0]));
            }
            let (y, _, stats) = bn_forward_train(p, layout, x.data());
            p.apply_batch_stats(&stats);
            y
        }
        Mode::Infer => bn_forward_infer(p, layout, x.data()),
    };
    Tensor::from_vec(s, y)
}
