use rand::Rng;

use super::gemm::{matmul, matmul_at, matmul_bt};
use super::Tensor;

/// Fully connected head. Every layer but the last is followed by ReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams {
    /// `(out, in)` per layer.
    pub weights: Vec<Tensor>,
    /// `(out)` per layer.
    pub biases: Vec<Tensor>,
}

impl DenseParams {
    pub fn zeros(input: usize, sizes: &[usize]) -> Self {
        let mut fan_in = input;
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for &out in sizes {
            weights.push(Tensor::zeros(&[out, fan_in]));
            biases.push(Tensor::zeros(&[out]));
            fan_in = out;
        }
        Self { weights, biases }
    }

    pub fn init<R: Rng>(input: usize, sizes: &[usize], rng: &mut R) -> Self {
        let mut p = Self::zeros(input, sizes);
        for w in &mut p.weights {
            let bound = (1.0 / w.shape()[1] as f64).sqrt();
            w.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-bound..bound));
        }
        p
    }

    pub fn input_size(&self) -> usize {
        self.weights.first().map_or(0, |w| w.shape()[1])
    }

    pub fn l2_sum(&self) -> f64 {
        self.weights.iter().flat_map(|w| w.data()).map(|v| v * v).sum()
    }
}

pub(crate) struct DenseTrace {
    /// Input to each layer, `(B, in)`.
    inputs: Vec<Vec<f64>>,
    /// Pre-activation of each layer, `(B, out)`.
    pre: Vec<Vec<f64>>,
}

pub(crate) fn dense_forward(p: &DenseParams, x: &[f64], batch: usize) -> (Vec<f64>, DenseTrace) {
    let mut inputs = Vec::with_capacity(p.weights.len());
    let mut pre = Vec::with_capacity(p.weights.len());
    let mut a = x.to_vec();
    let last = p.weights.len() - 1;
    for (l, (w, b)) in p.weights.iter().zip(&p.biases).enumerate() {
        let (out, fan_in) = (w.shape()[0], w.shape()[1]);
        let mut z = vec![0.0; batch * out];
        for row in z.chunks_exact_mut(out) {
            row.copy_from_slice(b.data());
        }
        matmul_bt(batch, fan_in, out, &a, w.data(), 1.0, &mut z);
        let next = if l == last { z.clone() } else { z.iter().map(|v| v.max(0.0)).collect() };
        inputs.push(std::mem::replace(&mut a, next));
        pre.push(z);
    }
    (a, DenseTrace { inputs, pre })
}

/// Returns `(dx, dweights, dbiases)` for output gradient `dout` (`(B, 1)` or `(B, out)`).
pub(crate) fn dense_backward(p: &DenseParams, trace: &DenseTrace, dout: &[f64], batch: usize) -> (Vec<f64>, Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let n = p.weights.len();
    let mut dw = vec![Vec::new(); n];
    let mut db = vec![Vec::new(); n];
    let mut delta = dout.to_vec();
    for l in (0..n).rev() {
        let w = &p.weights[l];
        let (out, fan_in) = (w.shape()[0], w.shape()[1]);
        if l != n - 1 {
            for (d, z) in delta.iter_mut().zip(&trace.pre[l]) {
                if *z <= 0.0 {
                    *d = 0.0;
                }
            }
        }
        let mut gw = vec![0.0; out * fan_in];
        matmul_at(out, batch, fan_in, &delta, &trace.inputs[l], 0.0, &mut gw);
        let mut gb = vec![0.0; out];
        for row in delta.chunks_exact(out) {
            for (g, d) in gb.iter_mut().zip(row) {
                *g += d;
            }
        }
        let mut dx = vec![0.0; batch * fan_in];
        matmul(batch, out, fan_in, &delta, w.data(), 0.0, &mut dx);
        dw[l] = gw;
        db[l] = gb;
        delta = dx;
    }
    (delta, dw, db)
}
