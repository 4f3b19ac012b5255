//! Convolutional LSTM layer.
//!
//! Gate pre-activations are cross-correlations along the width axis with
//! "same" zero padding (`pad_left = (K - 1) / 2`), so the hidden width equals
//! the input width. No peephole terms.
//!
//! Internally a sequence is stored time-major as `[T][C][B][W]`; with that
//! layout one timestep of the whole batch is a single `(4 C_h) x (C_in + C_h) K`
//! by `(C_in + C_h) K x (B W)` product.

use rand::Rng;

use super::gemm::{gemm_strided, matmul, matmul_bt};
use super::{NetError, Tensor};

/// Gate order used everywhere: input, forget, output, candidate.
pub const GATE_NAMES: [&str; 4] = ["i", "f", "o", "g"];
const FORGET: usize = 1;
const CANDIDATE: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLstmParams {
    pub kernel_width: usize,
    pub in_channels: usize,
    pub hidden_channels: usize,
    /// Input kernels, each `(C_h, C_in, 1, K)`.
    pub wx: [Tensor; 4],
    /// Recurrent kernels, each `(C_h, C_h, 1, K)`.
    pub wh: [Tensor; 4],
    /// Biases, each `(C_h)`.
    pub bias: [Tensor; 4],
}

impl ConvLstmParams {
    pub fn zeros(in_channels: usize, hidden_channels: usize, kernel_width: usize) -> Self {
        let wx_shape = [hidden_channels, in_channels, 1, kernel_width];
        let wh_shape = [hidden_channels, hidden_channels, 1, kernel_width];
        Self {
            kernel_width,
            in_channels,
            hidden_channels,
            wx: std::array::from_fn(|_| Tensor::zeros(&wx_shape)),
            wh: std::array::from_fn(|_| Tensor::zeros(&wh_shape)),
            bias: std::array::from_fn(|_| Tensor::zeros(&[hidden_channels])),
        }
    }

    /// Uniform `+-sqrt(1 / fan_in)` kernels, zero biases except forget = 1.
    pub fn init<R: Rng>(in_channels: usize, hidden_channels: usize, kernel_width: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(in_channels, hidden_channels, kernel_width);
        let fill = |t: &mut Tensor, fan_in: usize, rng: &mut R| {
            let bound = (1.0 / fan_in as f64).sqrt();
            t.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-bound..bound));
        };
        for g in 0..4 {
            fill(&mut p.wx[g], in_channels * kernel_width, rng);
            fill(&mut p.wh[g], hidden_channels * kernel_width, rng);
        }
        p.bias[FORGET].fill(1.0);
        p
    }

    pub(crate) fn dims(&self) -> LayerDims {
        LayerDims { c_in: self.in_channels, c_h: self.hidden_channels, k: self.kernel_width }
    }

    /// All gate kernels as one `(4 C_h) x ((C_in + C_h) K)` matrix plus a
    /// `4 C_h` bias vector.
    pub(crate) fn pack(&self) -> PackedConvLstm {
        let d = self.dims();
        let cols = d.col_rows();
        let mut w = vec![0.0; 4 * d.c_h * cols];
        let mut b = vec![0.0; 4 * d.c_h];
        for g in 0..4 {
            for o in 0..d.c_h {
                let row = &mut w[(g * d.c_h + o) * cols..(g * d.c_h + o + 1) * cols];
                row[..d.c_in * d.k].copy_from_slice(&self.wx[g].data()[o * d.c_in * d.k..(o + 1) * d.c_in * d.k]);
                row[d.c_in * d.k..].copy_from_slice(&self.wh[g].data()[o * d.c_h * d.k..(o + 1) * d.c_h * d.k]);
                b[g * d.c_h + o] = self.bias[g].data()[o];
            }
        }
        PackedConvLstm { dims: d, w, b }
    }

    /// Inverse of [`pack`](Self::pack): splits packed kernel/bias data into
    /// the per-gate tensors.
    pub(crate) fn unpack(dims: LayerDims, w: &[f64], b: &[f64]) -> Self {
        let mut p = Self::zeros(dims.c_in, dims.c_h, dims.k);
        let cols = dims.col_rows();
        for g in 0..4 {
            for o in 0..dims.c_h {
                let row = &w[(g * dims.c_h + o) * cols..(g * dims.c_h + o + 1) * cols];
                p.wx[g].data_mut()[o * dims.c_in * dims.k..(o + 1) * dims.c_in * dims.k]
                    .copy_from_slice(&row[..dims.c_in * dims.k]);
                p.wh[g].data_mut()[o * dims.c_h * dims.k..(o + 1) * dims.c_h * dims.k]
                    .copy_from_slice(&row[dims.c_in * dims.k..]);
                p.bias[g].data_mut()[o] = b[g * dims.c_h + o];
            }
        }
        p
    }

    pub fn tensors(&self) -> impl Iterator<Item = (String, &Tensor)> {
        let wx = self.wx.iter().zip(GATE_NAMES).map(|(t, g)| (format!("wx_{g}"), t));
        let wh = self.wh.iter().zip(GATE_NAMES).map(|(t, g)| (format!("wh_{g}"), t));
        let b = self.bias.iter().zip(GATE_NAMES).map(|(t, g)| (format!("b_{g}"), t));
        wx.chain(wh).chain(b)
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.wx.iter_mut().chain(self.wh.iter_mut()).chain(self.bias.iter_mut())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct LayerDims {
    pub c_in: usize,
    pub c_h: usize,
    pub k: usize,
}

impl LayerDims {
    fn col_rows(&self) -> usize {
        (self.c_in + self.c_h) * self.k
    }

    fn pad(&self) -> isize {
        ((self.k - 1) / 2) as isize
    }
}

pub(crate) struct PackedConvLstm {
    pub dims: LayerDims,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

/// Everything the backward pass needs from one layer's forward pass.
pub(crate) struct LayerTrace {
    /// Hidden sequence `[T][C_h][B][W]`.
    pub h: Vec<f64>,
    /// Cell sequence, same layout.
    pub c: Vec<f64>,
    /// Activated gates `[T][4 C_h][B][W]`.
    gates: Vec<f64>,
    pub steps: usize,
    pub batch: usize,
    pub width: usize,
}

impl LayerTrace {
    pub fn step_h(&self, t: usize) -> &[f64] {
        let n = self.h.len() / self.steps;
        &self.h[t * n..(t + 1) * n]
    }

    pub fn step_c(&self, t: usize) -> &[f64] {
        let n = self.c.len() / self.steps;
        &self.c[t * n..(t + 1) * n]
    }
}

/// Writes rows `row0..row0 + C K` of the column matrix from `src` (`C x B x W`):
/// `col[row0 + c K + k][b W + w] = src[c][b][w + k - pad]`.
#[allow(clippy::too_many_arguments)]
fn im2col(src: &[f64], channels: usize, batch: usize, width: usize, k: usize, pad: isize, col: &mut [f64], row0: usize) {
    let bw = batch * width;
    for c in 0..channels {
        for kk in 0..k {
            let shift = kk as isize - pad;
            let row = &mut col[(row0 + c * k + kk) * bw..(row0 + c * k + kk + 1) * bw];
            let lo = (-shift).clamp(0, width as isize) as usize;
            let hi = (width as isize - shift).clamp(0, width as isize) as usize;
            for b in 0..batch {
                let dst = &mut row[b * width..(b + 1) * width];
                let s = &src[(c * batch + b) * width..(c * batch + b + 1) * width];
                dst[..lo].fill(0.0);
                dst[hi.max(lo)..].fill(0.0);
                if hi > lo {
                    let from = (lo as isize + shift) as usize;
                    dst[lo..hi].copy_from_slice(&s[from..from + (hi - lo)]);
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates column-matrix rows back into `dst`.
#[allow(clippy::too_many_arguments)]
fn col2im_add(col: &[f64], channels: usize, batch: usize, width: usize, k: usize, pad: isize, dst: &mut [f64], row0: usize) {
    let bw = batch * width;
    for c in 0..channels {
        for kk in 0..k {
            let shift = kk as isize - pad;
            let row = &col[(row0 + c * k + kk) * bw..(row0 + c * k + kk + 1) * bw];
            let lo = (-shift).clamp(0, width as isize) as usize;
            let hi = (width as isize - shift).clamp(0, width as isize) as usize;
            if hi <= lo {
                continue;
            }
            for b in 0..batch {
                let src = &row[b * width..(b + 1) * width];
                let d = &mut dst[(c * batch + b) * width..(c * batch + b + 1) * width];
                let from = (lo as isize + shift) as usize;
                for (x, y) in d[from..from + (hi - lo)].iter_mut().zip(&src[lo..hi]) {
                    *x += *y;
                }
            }
        }
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// One timestep for the whole batch. `gates` receives the activated gate
/// block, `c_out`/`h_out` the new states.
#[allow(clippy::too_many_arguments)]
fn step(
    p: &PackedConvLstm,
    x_t: &[f64],
    prev: Option<(&[f64], &[f64])>,
    batch: usize,
    width: usize,
    col: &mut [f64],
    gates: &mut [f64],
    c_out: &mut [f64],
    h_out: &mut [f64],
) {
    let d = p.dims;
    let bw = batch * width;
    let pad = d.pad();
    im2col(x_t, d.c_in, batch, width, d.k, pad, col, 0);
    match prev {
        Some((h_prev, _)) => im2col(h_prev, d.c_h, batch, width, d.k, pad, col, d.c_in * d.k),
        None => col[d.c_in * d.k * bw..].fill(0.0),
    }
    matmul(4 * d.c_h, d.col_rows(), bw, &p.w, col, 0.0, gates);
    for (row, &bias) in gates.chunks_exact_mut(bw).zip(&p.b) {
        row.iter_mut().for_each(|z| *z += bias);
    }
    let n = d.c_h * bw;
    for (g, block) in gates.chunks_exact_mut(n).enumerate() {
        if g == CANDIDATE {
            block.iter_mut().for_each(|z| *z = z.tanh());
        } else {
            block.iter_mut().for_each(|z| *z = sigmoid(*z));
        }
    }
    let (gi, rest) = gates.split_at(n);
    let (gf, rest) = rest.split_at(n);
    let (go, gg) = rest.split_at(n);
    for j in 0..n {
        let c_prev = prev.map_or(0.0, |(_, c)| c[j]);
        let c = gf[j] * c_prev + gi[j] * gg[j];
        c_out[j] = c;
        h_out[j] = go[j] * c.tanh();
    }
}

/// Runs the layer over `x` (`[T][C_in][B][W]`) from zero initial states.
pub(crate) fn layer_forward(p: &PackedConvLstm, x: &[f64], steps: usize, batch: usize, width: usize) -> LayerTrace {
    let d = p.dims;
    let bw = batch * width;
    let n = d.c_h * bw;
    let mut h = vec![0.0; steps * n];
    let mut c = vec![0.0; steps * n];
    let mut gates = vec![0.0; steps * 4 * n];
    let mut col = vec![0.0; d.col_rows() * bw];
    let x_len = d.c_in * bw;
    for t in 0..steps {
        let (h_done, h_rest) = h.split_at_mut(t * n);
        let (c_done, c_rest) = c.split_at_mut(t * n);
        let prev = (t > 0).then(|| (&h_done[(t - 1) * n..], &c_done[(t - 1) * n..]));
        step(
            p,
            &x[t * x_len..(t + 1) * x_len],
            prev,
            batch,
            width,
            &mut col,
            &mut gates[t * 4 * n..(t + 1) * 4 * n],
            &mut c_rest[..n],
            &mut h_rest[..n],
        );
    }
    LayerTrace { h, c, gates, steps, batch, width }
}

pub(crate) struct LayerGrads {
    /// Gradient w.r.t. the input sequence (empty when not requested).
    pub dx: Vec<f64>,
    pub dw: Vec<f64>,
    pub db: Vec<f64>,
}

/// Backpropagation through time. `dh_seq` is the loss gradient w.r.t. every
/// hidden state, `[T][C_h][B][W]`.
pub(crate) fn layer_backward(
    p: &PackedConvLstm,
    x: &[f64],
    trace: &LayerTrace,
    dh_seq: &[f64],
    want_dx: bool,
) -> LayerGrads {
    let d = p.dims;
    let (steps, batch, width) = (trace.steps, trace.batch, trace.width);
    let bw = batch * width;
    let n = d.c_h * bw;
    let x_len = d.c_in * bw;
    let cols = d.col_rows();
    let pad = d.pad();

    let mut dx = if want_dx { vec![0.0; steps * x_len] } else { Vec::new() };
    let mut dw = vec![0.0; 4 * d.c_h * cols];
    let mut db = vec![0.0; 4 * d.c_h];
    let mut dh_rec = vec![0.0; n];
    let mut dc_next = vec![0.0; n];
    let mut dz = vec![0.0; 4 * n];
    let mut col = vec![0.0; cols * bw];
    let mut dcol = vec![0.0; cols * bw];
    let zeros = vec![0.0; n];

    for t in (0..steps).rev() {
        let gates = &trace.gates[t * 4 * n..(t + 1) * 4 * n];
        let (gi, rest) = gates.split_at(n);
        let (gf, rest) = rest.split_at(n);
        let (go, gg) = rest.split_at(n);
        let c_t = trace.step_c(t);
        let c_prev = if t > 0 { trace.step_c(t - 1) } else { &zeros };
        let dh_t = &dh_seq[t * n..(t + 1) * n];
        {
            let (dzi, rest) = dz.split_at_mut(n);
            let (dzf, rest) = rest.split_at_mut(n);
            let (dzo, dzg) = rest.split_at_mut(n);
            for j in 0..n {
                let dh = dh_t[j] + dh_rec[j];
                let tc = c_t[j].tanh();
                let dc = dc_next[j] + dh * go[j] * (1.0 - tc * tc);
                dzo[j] = dh * tc * go[j] * (1.0 - go[j]);
                dzi[j] = dc * gg[j] * gi[j] * (1.0 - gi[j]);
                dzf[j] = dc * c_prev[j] * gf[j] * (1.0 - gf[j]);
                dzg[j] = dc * gi[j] * (1.0 - gg[j] * gg[j]);
                dc_next[j] = dc * gf[j];
            }
        }

        im2col(&x[t * x_len..(t + 1) * x_len], d.c_in, batch, width, d.k, pad, &mut col, 0);
        if t > 0 {
            im2col(trace.step_h(t - 1), d.c_h, batch, width, d.k, pad, &mut col, d.c_in * d.k);
        } else {
            col[d.c_in * d.k * bw..].fill(0.0);
        }
        matmul_bt(4 * d.c_h, bw, cols, &dz, &col, 1.0, &mut dw);
        for (acc, row) in db.iter_mut().zip(dz.chunks_exact(bw)) {
            *acc += row.iter().sum::<f64>();
        }

        // dcol = W^T dz, input rows only when needed.
        let first_row = if want_dx { 0 } else { d.c_in * d.k };
        gemm_strided(
            cols - first_row,
            4 * d.c_h,
            bw,
            &p.w[first_row..],
            (1, cols),
            &dz,
            (bw, 1),
            0.0,
            &mut dcol[first_row * bw..],
        );
        if want_dx {
            col2im_add(&dcol, d.c_in, batch, width, d.k, pad, &mut dx[t * x_len..(t + 1) * x_len], 0);
        }
        dh_rec.fill(0.0);
        if t > 0 {
            col2im_add(&dcol, d.c_h, batch, width, d.k, pad, &mut dh_rec, d.c_in * d.k);
        }
    }
    LayerGrads { dx, dw, db }
}

fn check_state(t: &Tensor, channels: usize, width: usize, what: &str) -> Result<(), NetError> {
    t.expect_shape(&[channels, 1, width], what)
}

/// Single ConvLSTM step on one sample; tensors are `(C, 1, W)`.
pub fn convlstm_cell_forward(
    x_t: &Tensor,
    h_prev: &Tensor,
    c_prev: &Tensor,
    p: &ConvLstmParams,
) -> Result<(Tensor, Tensor), NetError> {
    let width = x_t.shape().last().copied().unwrap_or(0);
    check_state(x_t, p.in_channels, width, "cell input")?;
    check_state(h_prev, p.hidden_channels, width, "previous hidden state")?;
    check_state(c_prev, p.hidden_channels, width, "previous cell state")?;
    let packed = p.pack();
    let d = packed.dims;
    let n = d.c_h * width;
    let mut col = vec![0.0; d.col_rows() * width];
    let mut gates = vec![0.0; 4 * n];
    let mut h = Tensor::zeros(&[d.c_h, 1, width]);
    let mut c = Tensor::zeros(&[d.c_h, 1, width]);
    step(
        &packed,
        x_t.data(),
        Some((h_prev.data(), c_prev.data())),
        1,
        width,
        &mut col,
        &mut gates,
        c.data_mut(),
        h.data_mut(),
    );
    Ok((h, c))
}

/// Unrolls the layer over `x_seq` (`(T, C_in, 1, W)`) from zero states.
/// Returns the hidden sequence `(T, C_h, 1, W)` and the final `(h_T, c_T)`.
pub fn convlstm_layer_forward(x_seq: &Tensor, p: &ConvLstmParams) -> Result<(Tensor, Tensor, Tensor), NetError> {
    let s = x_seq.shape();
    if s.len() != 4 || s[1] != p.in_channels || s[2] != 1 || s[0] == 0 {
        return Err(NetError::ShapeMismatch(format!(
            "layer input: expected (T>=1, {}, 1, W), got {s:?}",
            p.in_channels
        )));
    }
    let (steps, width) = (s[0], s[3]);
    let trace = layer_forward(&p.pack(), x_seq.data(), steps, 1, width);
    let n = p.hidden_channels * width;
    let state = |v: &[f64]| Tensor::from_vec(&[p.hidden_channels, 1, width], v.to_vec());
    let h_last = state(&trace.h[(steps - 1) * n..])?;
    let c_last = state(&trace.c[(steps - 1) * n..])?;
    let hidden = Tensor::from_vec(&[steps, p.hidden_channels, 1, width], trace.h)?;
    Ok((hidden, h_last, c_last))
}
