use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::batchnorm::{bn_backward, bn_forward_infer, bn_forward_train, BatchStats, BnLayout, BnTrace};
use super::convlstm::{layer_backward, layer_forward, ConvLstmParams, LayerTrace, PackedConvLstm};
use super::dense::{dense_backward, dense_forward, DenseParams, DenseTrace};
use super::dropout::dropout_mask;
use super::{BatchNormParams, Mode, NetError, Tensor};
use crate::features::{FeatureSequence, NormalizationStats, FEATURE_DIM};

pub const DENSE_SIZES: [usize; 4] = [128, 32, 3, 1];

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub timesteps: usize,
    pub width: usize,
    pub in_channels: usize,
    pub hidden_channels: (usize, usize),
    pub kernel_widths: (usize, usize),
    pub dense_sizes: Vec<usize>,
    pub dropout_rate: f64,
    pub l2_lambda: f64,
    pub seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            timesteps: 299,
            width: 100,
            in_channels: FEATURE_DIM,
            hidden_channels: (8, 4),
            kernel_widths: (20, 10),
            dense_sizes: DENSE_SIZES.to_vec(),
            dropout_rate: 0.3,
            l2_lambda: 0.01,
            seed: 0,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<(), NetError> {
        let positive = [
            self.timesteps,
            self.width,
            self.in_channels,
            self.hidden_channels.0,
            self.hidden_channels.1,
            self.kernel_widths.0,
            self.kernel_widths.1,
        ];
        if positive.contains(&0) {
            return Err(NetError::InvalidConfig(format!("zero dimension in {self:?}")));
        }
        if self.dense_sizes.last() != Some(&1) || self.dense_sizes.contains(&0) {
            return Err(NetError::InvalidConfig("dense head must end in a single unit".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(NetError::InvalidConfig(format!("dropout rate {} outside [0, 1)", self.dropout_rate)));
        }
        if !(self.l2_lambda >= 0.0) {
            return Err(NetError::InvalidConfig(format!("l2 lambda {}", self.l2_lambda)));
        }
        Ok(())
    }

    /// Feature frames consumed per example.
    pub fn frames_needed(&self) -> usize {
        self.timesteps * self.width
    }

    pub fn flatten_size(&self) -> usize {
        self.hidden_channels.1 * self.width
    }
}

/// All learnable parameters, normalization statistics and configuration of
/// one network.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub config: NetworkConfig,
    pub layer1: ConvLstmParams,
    pub bn1: BatchNormParams,
    pub layer2: ConvLstmParams,
    pub bn2: BatchNormParams,
    pub dense: DenseParams,
    pub norm_stats: NormalizationStats,
    /// Optimizer learning rate used to train this state (provenance only).
    pub learning_rate: f64,
    pub epochs_trained: u32,
}

impl ModelState {
    /// Randomly initialized from `config.seed`.
    pub fn new(config: NetworkConfig) -> Result<Self, NetError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let (c1, c2) = config.hidden_channels;
        let (k1, k2) = config.kernel_widths;
        let layer1 = ConvLstmParams::init(config.in_channels, c1, k1, &mut rng);
        let layer2 = ConvLstmParams::init(c1, c2, k2, &mut rng);
        let dense = DenseParams::init(config.flatten_size(), &config.dense_sizes, &mut rng);
        Ok(Self::assemble(config, layer1, layer2, dense))
    }

    /// Every learnable parameter zero (batch-norm gamma included).
    pub fn zeros(config: NetworkConfig) -> Result<Self, NetError> {
        config.validate()?;
        let (c1, c2) = config.hidden_channels;
        let (k1, k2) = config.kernel_widths;
        let layer1 = ConvLstmParams::zeros(config.in_channels, c1, k1);
        let layer2 = ConvLstmParams::zeros(c1, c2, k2);
        let dense = DenseParams::zeros(config.flatten_size(), &config.dense_sizes);
        let mut m = Self::assemble(config, layer1, layer2, dense);
        m.bn1.gamma.fill(0.0);
        m.bn2.gamma.fill(0.0);
        Ok(m)
    }

    fn assemble(config: NetworkConfig, layer1: ConvLstmParams, layer2: ConvLstmParams, dense: DenseParams) -> Self {
        let (c1, c2) = config.hidden_channels;
        Self {
            config,
            layer1,
            bn1: BatchNormParams::new(c1),
            layer2,
            bn2: BatchNormParams::new(c2),
            dense,
            norm_stats: NormalizationStats::IDENTITY,
            learning_rate: 0.0,
            epochs_trained: 0,
        }
    }

    /// Learnable tensors in canonical order, with dotted names.
    pub fn learnable(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = Vec::new();
        out.extend(self.layer1.tensors().map(|(n, t)| (format!("layer1.{n}"), t)));
        out.push(("bn1.gamma".into(), &self.bn1.gamma));
        out.push(("bn1.beta".into(), &self.bn1.beta));
        out.extend(self.layer2.tensors().map(|(n, t)| (format!("layer2.{n}"), t)));
        out.push(("bn2.gamma".into(), &self.bn2.gamma));
        out.push(("bn2.beta".into(), &self.bn2.beta));
        for (l, (w, b)) in self.dense.weights.iter().zip(&self.dense.biases).enumerate() {
            out.push((format!("dense{l}.weight"), w));
            out.push((format!("dense{l}.bias"), b));
        }
        out
    }

    /// Same order as [`learnable`](Self::learnable).
    pub fn learnable_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = Vec::new();
        out.extend(self.layer1.tensors_mut());
        out.push(&mut self.bn1.gamma);
        out.push(&mut self.bn1.beta);
        out.extend(self.layer2.tensors_mut());
        out.push(&mut self.bn2.gamma);
        out.push(&mut self.bn2.beta);
        for (w, b) in self.dense.weights.iter_mut().zip(self.dense.biases.iter_mut()) {
            out.push(w);
            out.push(b);
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.learnable().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn apply_batch_stats(&mut self, stats: &[BatchStats; 2]) {
        self.bn1.apply_batch_stats(&stats[0]);
        self.bn2.apply_batch_stats(&stats[1]);
    }
}

/// Gradients in the canonical order of [`ModelState::learnable`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub names: Vec<String>,
    pub tensors: Vec<Tensor>,
}

impl Gradients {
    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }
}

/// Lays out `T * W` frames as `(T, C_in, 1, W)`; timestep `t` holds frames
/// `[t W, (t + 1) W)`. Extra frames at the end are dropped.
pub fn shape_input(seq: &FeatureSequence, cfg: &NetworkConfig) -> Result<Tensor, NetError> {
    let needed = cfg.frames_needed();
    if seq.frames.len() < needed {
        return Err(NetError::TooFewFrames { have: seq.frames.len(), need: needed });
    }
    if cfg.in_channels != FEATURE_DIM {
        return Err(NetError::InvalidConfig(format!("input channels {} != {FEATURE_DIM}", cfg.in_channels)));
    }
    let (t_steps, w) = (cfg.timesteps, cfg.width);
    let mut data = vec![0.0; needed * FEATURE_DIM];
    for t in 0..t_steps {
        for x in 0..w {
            let v = seq.frames[t * w + x].values();
            for (c, val) in v.iter().enumerate() {
                data[(t * FEATURE_DIM + c) * w + x] = *val;
            }
        }
    }
    Tensor::from_vec(&[t_steps, FEATURE_DIM, 1, w], data)
}

/// Stacks per-example `(T, C, 1, W)` tensors into a `(B, T, C, 1, W)` batch.
pub fn stack_batch(items: &[&Tensor]) -> Result<Tensor, NetError> {
    let first = items.first().ok_or_else(|| NetError::ShapeMismatch("empty batch".into()))?;
    let mut data = Vec::with_capacity(first.len() * items.len());
    for t in items {
        t.expect_shape(first.shape(), "batch item")?;
        data.extend_from_slice(t.data());
    }
    let mut shape = vec![items.len()];
    shape.extend_from_slice(first.shape());
    Tensor::from_vec(&shape, data)
}

/// `(B, T, C, 1, W)` to time-major `[T][C][B][W]`.
fn to_time_major(batch: &Tensor, cfg: &NetworkConfig) -> Result<(Vec<f64>, usize), NetError> {
    let s = batch.shape();
    let expect = [cfg.timesteps, cfg.in_channels, 1, cfg.width];
    if s.len() != 5 || s[1..] != expect || s[0] == 0 {
        return Err(NetError::ShapeMismatch(format!("network input: expected (B, {expect:?}), got {s:?}")));
    }
    let b = s[0];
    let (t_steps, c, w) = (cfg.timesteps, cfg.in_channels, cfg.width);
    let src = batch.data();
    let mut out = vec![0.0; src.len()];
    for bi in 0..b {
        for t in 0..t_steps {
            for ci in 0..c {
                let from = ((bi * t_steps + t) * c + ci) * w;
                let to = ((t * c + ci) * b + bi) * w;
                out[to..to + w].copy_from_slice(&src[from..from + w]);
            }
        }
    }
    Ok((out, b))
}

struct Forward {
    predictions: Vec<f64>,
    trace: Option<Trace>,
    stats: Option<[BatchStats; 2]>,
}

struct Trace {
    x: Vec<f64>,
    packed1: PackedConvLstm,
    packed2: PackedConvLstm,
    l1: LayerTrace,
    bn1: BnTrace,
    y1: Vec<f64>,
    l2: LayerTrace,
    bn2: BnTrace,
    mask: Vec<f64>,
    dense: DenseTrace,
}

fn check_finite(v: &[f64], layer: &'static str) -> Result<(), NetError> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(NetError::NonFinite { layer })
    }
}

fn forward_pass<R: Rng>(m: &ModelState, x: Vec<f64>, batch: usize, mode: Mode, rng: &mut R) -> Result<Forward, NetError> {
    let cfg = &m.config;
    let (t_steps, w) = (cfg.timesteps, cfg.width);
    let (c1, c2) = cfg.hidden_channels;
    let bw = batch * w;
    if mode == Mode::Train && batch * t_steps * w < 2 {
        return Err(NetError::BatchTooSmall(batch));
    }

    let packed1 = m.layer1.pack();
    let l1 = layer_forward(&packed1, &x, t_steps, batch, w);
    check_finite(&l1.h, "layer1")?;
    let layout1 = BnLayout { outer: t_steps, channels: c1, inner: bw };
    let (y1, bn1_trace, stats1) = match mode {
        Mode::Train => {
            let (y, tr, st) = bn_forward_train(&m.bn1, layout1, &l1.h);
            (y, Some(tr), Some(st))
        }
        Mode::Infer => (bn_forward_infer(&m.bn1, layout1, &l1.h), None, None),
    };
    check_finite(&y1, "bn1")?;

    let packed2 = m.layer2.pack();
    let l2 = layer_forward(&packed2, &y1, t_steps, batch, w);
    check_finite(&l2.h, "layer2")?;
    let layout2 = BnLayout { outer: t_steps, channels: c2, inner: bw };
    let (y2, bn2_trace, stats2) = match mode {
        Mode::Train => {
            let (y, tr, st) = bn_forward_train(&m.bn2, layout2, &l2.h);
            (y, Some(tr), Some(st))
        }
        Mode::Infer => (bn_forward_infer(&m.bn2, layout2, &l2.h), None, None),
    };
    check_finite(&y2, "bn2")?;

    // Final timestep, flattened per sample as (channel, width).
    let last = &y2[(t_steps - 1) * c2 * bw..];
    let d = c2 * w;
    let mut flat = vec![0.0; batch * d];
    for c in 0..c2 {
        for b in 0..batch {
            flat[b * d + c * w..b * d + (c + 1) * w].copy_from_slice(&last[(c * batch + b) * w..(c * batch + b + 1) * w]);
        }
    }
    let mask = match mode {
        Mode::Train => {
            let mask = dropout_mask(flat.len(), cfg.dropout_rate, rng);
            flat.iter_mut().zip(&mask).for_each(|(v, k)| *v *= k);
            mask
        }
        Mode::Infer => Vec::new(),
    };
    let (out, dense_trace) = dense_forward(&m.dense, &flat, batch);
    check_finite(&out, "dense")?;

    let (trace, stats) = match (bn1_trace, bn2_trace, stats1, stats2) {
        (Some(bn1), Some(bn2), Some(s1), Some(s2)) => (
            Some(Trace { x, packed1, packed2, l1, bn1, y1, l2, bn2, mask, dense: dense_trace }),
            Some([s1, s2]),
        ),
        _ => (None, None),
    };
    Ok(Forward { predictions: out, trace, stats })
}

/// GA estimates (months) for a `(B, T, C_in, 1, W)` batch.
///
/// Train mode uses batch statistics, draws a dropout mask from `rng` and
/// updates the batch-norm running estimates in `m`; infer mode is
/// deterministic and leaves `m` untouched.
pub fn network_forward<R: Rng>(batch: &Tensor, m: &mut ModelState, mode: Mode, rng: &mut R) -> Result<Tensor, NetError> {
    let (x, b) = to_time_major(batch, &m.config)?;
    let f = forward_pass(m, x, b, mode, rng)?;
    if let Some(stats) = &f.stats {
        m.apply_batch_stats(stats);
    }
    Tensor::from_vec(&[b], f.predictions)
}

/// Inference-mode forward pass.
pub fn predict(batch: &Tensor, m: &ModelState) -> Result<Vec<f64>, NetError> {
    let (x, b) = to_time_major(batch, &m.config)?;
    let mut unused = ChaCha8Rng::seed_from_u64(0);
    Ok(forward_pass(m, x, b, Mode::Infer, &mut unused)?.predictions)
}

#[derive(Debug, Clone)]
pub struct LossOutput {
    /// MAE plus the L2 penalty on dense weights.
    pub loss: f64,
    pub mae: f64,
    pub predictions: Vec<f64>,
    pub gradients: Gradients,
    /// Batch statistics for updating running estimates (not applied here).
    pub batch_stats: [BatchStats; 2],
}

/// Train-mode loss `mean |a_hat - a| + lambda * sum(dense weights^2)` and its
/// exact gradient w.r.t. every learnable parameter. The MAE subgradient at
/// zero residual is zero.
pub fn loss_and_gradients<R: Rng>(batch: &Tensor, labels: &[f64], m: &ModelState, rng: &mut R) -> Result<LossOutput, NetError> {
    let (x, b) = to_time_major(batch, &m.config)?;
    if b < 2 {
        return Err(NetError::BatchTooSmall(b));
    }
    if labels.len() != b {
        return Err(NetError::ShapeMismatch(format!("{} labels for batch of {b}", labels.len())));
    }
    let f = forward_pass(m, x, b, Mode::Train, rng)?;
    let (tr, stats) = match (f.trace, f.stats) {
        (Some(t), Some(s)) => (t, s),
        _ => unreachable!("train mode always records a trace"),
    };
    let cfg = &m.config;
    let (t_steps, w) = (cfg.timesteps, cfg.width);
    let (c1, c2) = cfg.hidden_channels;
    let bw = b * w;

    let residuals: Vec<f64> = f.predictions.iter().zip(labels).map(|(p, y)| p - y).collect();
    let mae = residuals.iter().map(|r| r.abs()).sum::<f64>() / b as f64;
    let loss = mae + cfg.l2_lambda * m.dense.l2_sum();
    if !loss.is_finite() {
        return Err(NetError::NonFinite { layer: "loss" });
    }
    let dout: Vec<f64> = residuals
        .iter()
        .map(|&r| if r > 0.0 { 1.0 } else if r < 0.0 { -1.0 } else { 0.0 } / b as f64)
        .collect();

    let (mut dflat, mut dw_dense, db_dense) = dense_backward(&m.dense, &tr.dense, &dout, b);
    for (g, w_t) in dw_dense.iter_mut().zip(&m.dense.weights) {
        for (gv, wv) in g.iter_mut().zip(w_t.data()) {
            *gv += 2.0 * cfg.l2_lambda * wv;
        }
    }
    dflat.iter_mut().zip(&tr.mask).for_each(|(d, k)| *d *= k);

    let d = c2 * w;
    let mut dy2 = vec![0.0; t_steps * c2 * bw];
    let last = &mut dy2[(t_steps - 1) * c2 * bw..];
    for c in 0..c2 {
        for bi in 0..b {
            last[(c * b + bi) * w..(c * b + bi + 1) * w].copy_from_slice(&dflat[bi * d + c * w..bi * d + (c + 1) * w]);
        }
    }
    let (dh2, dgamma2, dbeta2) = bn_backward(&m.bn2, BnLayout { outer: t_steps, channels: c2, inner: bw }, &tr.bn2, &dy2);
    let g2 = layer_backward(&tr.packed2, &tr.y1, &tr.l2, &dh2, true);
    let (dh1, dgamma1, dbeta1) = bn_backward(&m.bn1, BnLayout { outer: t_steps, channels: c1, inner: bw }, &tr.bn1, &g2.dx);
    let g1 = layer_backward(&tr.packed1, &tr.x, &tr.l1, &dh1, false);

    let grad1 = ConvLstmParams::unpack(tr.packed1.dims, &g1.dw, &g1.db);
    let grad2 = ConvLstmParams::unpack(tr.packed2.dims, &g2.dw, &g2.db);
    let vec_t = |v: Vec<f64>| Tensor::from_vec(&[v.len()], v);
    let mut tensors: Vec<Tensor> = grad1.tensors().map(|(_, t)| t.clone()).collect();
    tensors.push(vec_t(dgamma1)?);
    tensors.push(vec_t(dbeta1)?);
    tensors.extend(grad2.tensors().map(|(_, t)| t.clone()));
    tensors.push(vec_t(dgamma2)?);
    tensors.push(vec_t(dbeta2)?);
    for (l, (gw, gb)) in dw_dense.into_iter().zip(db_dense).enumerate() {
        tensors.push(Tensor::from_vec(m.dense.weights[l].shape(), gw)?);
        tensors.push(Tensor::from_vec(m.dense.biases[l].shape(), gb)?);
    }
    let names = m.learnable().into_iter().map(|(n, _)| n).collect();
    Ok(LossOutput { loss, mae, predictions: f.predictions, gradients: Gradients { names, tensors }, batch_stats: stats })
}
