//! Loop-nest references for the network layers, each wrapped as a check that
//! returns the worst deviation on one random instance.

use dopplerga::clstm::{
    batchnorm_forward, convlstm_cell_forward, convlstm_layer_forward, loss_and_gradients, network_forward,
    BatchNormParams, ConvLstmParams, Mode, ModelState, NetworkConfig, Tensor,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Map = Vec<Vec<f64>>;

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn random_tensor(shape: &[usize], scale: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

pub fn random_params(c_in: usize, c_h: usize, k: usize, rng: &mut ChaCha8Rng) -> ConvLstmParams {
    let mut p = ConvLstmParams::zeros(c_in, c_h, k);
    for t in p.tensors_mut() {
        t.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-0.6..0.6));
    }
    p
}

/// `sum_c sum_k w[o][c][0][k] * x[c][0][pos + k - (K-1)/2]`, zero outside.
fn corr(w: &Tensor, x: &[Vec<f64>], o: usize, pos: usize) -> f64 {
    let (ch, k) = (w.shape()[1], w.shape()[3]);
    let pad = ((k - 1) / 2) as isize;
    let width = x[0].len() as isize;
    let mut s = 0.0;
    for (c, xc) in x.iter().enumerate().take(ch) {
        for j in 0..k {
            let src = pos as isize + j as isize - pad;
            if src >= 0 && src < width {
                s += w.at(&[o, c, 0, j]) * xc[src as usize];
            }
        }
    }
    s
}

pub fn oracle_cell(x: &Map, h: &Map, c: &Map, p: &ConvLstmParams) -> (Map, Map) {
    let width = x[0].len();
    let c_h = p.hidden_channels;
    let mut h_out = vec![vec![0.0; width]; c_h];
    let mut c_out = vec![vec![0.0; width]; c_h];
    for o in 0..c_h {
        for pos in 0..width {
            let pre = |g: usize| corr(&p.wx[g], x, o, pos) + corr(&p.wh[g], h, o, pos) + p.bias[g].data()[o];
            let i = sigmoid(pre(0));
            let f = sigmoid(pre(1));
            let og = sigmoid(pre(2));
            let g = pre(3).tanh();
            c_out[o][pos] = f * c[o][pos] + i * g;
            h_out[o][pos] = og * c_out[o][pos].tanh();
        }
    }
    (h_out, c_out)
}

pub fn oracle_layer(xs: &[Map], p: &ConvLstmParams) -> Vec<Map> {
    let width = xs[0][0].len();
    let mut h = vec![vec![0.0; width]; p.hidden_channels];
    let mut c = h.clone();
    let mut out = Vec::new();
    for x in xs {
        let (nh, nc) = oracle_cell(x, &h, &c, p);
        h = nh;
        c = nc;
        out.push(h.clone());
    }
    out
}

pub fn to_map(t: &Tensor, lead: &[usize]) -> Map {
    let s = t.shape();
    let (ch, w) = (s[s.len() - 3], s[s.len() - 1]);
    (0..ch)
        .map(|c| {
            (0..w)
                .map(|x| {
                    let mut idx = lead.to_vec();
                    idx.extend([c, 0, x]);
                    t.at(&idx)
                })
                .collect()
        })
        .collect()
}

fn max_diff(a: &Map, t: &Tensor, lead: &[usize]) -> f64 {
    let b = to_map(t, lead);
    a.iter().flatten().zip(b.iter().flatten()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// One cell step against [`oracle_cell`].
pub fn cell_error(seed: u64, width: usize, c_in: usize, c_h: usize, k: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = random_params(c_in, c_h, k, &mut rng);
    let x = random_tensor(&[c_in, 1, width], 2.0, &mut rng);
    let h = random_tensor(&[c_h, 1, width], 1.0, &mut rng);
    let c = random_tensor(&[c_h, 1, width], 1.5, &mut rng);
    let (h1, c1) = convlstm_cell_forward(&x, &h, &c, &p).unwrap();
    let (oh, oc) = oracle_cell(&to_map(&x, &[]), &to_map(&h, &[]), &to_map(&c, &[]), &p);
    max_diff(&oh, &h1, &[]).max(max_diff(&oc, &c1, &[]))
}

/// A whole sequence against the unrolled oracle, every step and `h_T`.
pub fn layer_error(seed: u64, steps: usize, width: usize, c_in: usize, c_h: usize, k: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = random_params(c_in, c_h, k, &mut rng);
    let xs = random_tensor(&[steps, c_in, 1, width], 2.0, &mut rng);
    let (hidden, h_t, c_t) = convlstm_layer_forward(&xs, &p).unwrap();
    assert_eq!(c_t.shape(), &[c_h, 1, width]);
    let maps: Vec<Map> = (0..steps).map(|t| to_map(&xs, &[t])).collect();
    let oracle = oracle_layer(&maps, &p);
    let mut worst = max_diff(&oracle[steps - 1], &h_t, &[]);
    for (t, o) in oracle.iter().enumerate() {
        worst = worst.max(max_diff(o, &hidden, &[t]));
    }
    worst
}

/// Training-mode output, running-statistics update and inference-mode
/// output against the direct formulas.
pub fn batchnorm_error(seed: u64, b: usize, ch: usize, width: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = random_tensor(&[b, ch, 1, width], 3.0, &mut rng);
    let mut p = BatchNormParams::new(ch);
    p.gamma = random_tensor(&[ch], 2.0, &mut rng);
    p.beta = random_tensor(&[ch], 2.0, &mut rng);
    let (mut q, gamma, beta) = (p.clone(), p.gamma.clone(), p.beta.clone());
    let y = batchnorm_forward(&x, &mut p, Mode::Train).unwrap();
    let n = (b * width) as f64;
    let mut worst: f64 = 0.0;
    for c in 0..ch {
        let vals: Vec<f64> = (0..b).flat_map(|bi| (0..width).map(move |w| (bi, w))).map(|(bi, w)| x.at(&[bi, c, 0, w])).collect();
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        for bi in 0..b {
            for w in 0..width {
                let want = gamma.data()[c] * (x.at(&[bi, c, 0, w]) - mean) / (var + 1e-5).sqrt() + beta.data()[c];
                worst = worst.max((y.at(&[bi, c, 0, w]) - want).abs());
            }
        }
        let rm = 0.9 * 0.0 + 0.1 * mean;
        let rv = 0.9 * 1.0 + 0.1 * var * n / (n - 1.0);
        worst = worst.max((p.running_mean.data()[c] - rm).abs()).max((p.running_var.data()[c] - rv).abs());
    }
    q.running_mean = p.running_mean.clone();
    q.running_var = p.running_var.clone();
    let yi = batchnorm_forward(&x, &mut q, Mode::Infer).unwrap();
    for c in 0..ch {
        let s = gamma.data()[c] / (q.running_var.data()[c] + 1e-5).sqrt();
        for bi in 0..b {
            for w in 0..width {
                let want = (x.at(&[bi, c, 0, w]) - q.running_mean.data()[c]) * s + beta.data()[c];
                worst = worst.max((yi.at(&[bi, c, 0, w]) - want).abs());
            }
        }
    }
    worst
}

/// BN over `[b][t][c][w]` per channel, over (b, t, w).
fn oracle_bn(seq: &mut [Vec<Map>], p: &BatchNormParams, train: bool) {
    let ch = p.channels();
    for c in 0..ch {
        let (mean, var) = if train {
            let vals: Vec<f64> = seq.iter().flat_map(|s| s.iter().flat_map(|t| t[c].iter().copied())).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            (mean, vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64)
        } else {
            (p.running_mean.data()[c], p.running_var.data()[c])
        };
        for s in seq.iter_mut() {
            for t in s.iter_mut() {
                for v in t[c].iter_mut() {
                    *v = p.gamma.data()[c] * (*v - mean) / (var + p.eps).sqrt() + p.beta.data()[c];
                }
            }
        }
    }
}

pub fn oracle_network(x: &Tensor, m: &ModelState, train: bool) -> Vec<f64> {
    let s = x.shape();
    let (b, steps) = (s[0], s[1]);
    let inputs: Vec<Vec<Map>> = (0..b).map(|bi| (0..steps).map(|t| to_map(x, &[bi, t])).collect()).collect();
    let mut l1: Vec<Vec<Map>> = inputs.iter().map(|xs| oracle_layer(xs, &m.layer1)).collect();
    oracle_bn(&mut l1, &m.bn1, train);
    let mut l2: Vec<Vec<Map>> = l1.iter().map(|xs| oracle_layer(xs, &m.layer2)).collect();
    oracle_bn(&mut l2, &m.bn2, train);
    l2.iter()
        .map(|seq| {
            let mut a: Vec<f64> = seq[steps - 1].iter().flatten().copied().collect();
            let n = m.dense.weights.len();
            for (l, (w, bias)) in m.dense.weights.iter().zip(&m.dense.biases).enumerate() {
                let (out, fan_in) = (w.shape()[0], w.shape()[1]);
                a = (0..out)
                    .map(|o| {
                        let z = bias.data()[o] + (0..fan_in).map(|i| w.at(&[o, i]) * a[i]).sum::<f64>();
                        if l + 1 < n { z.max(0.0) } else { z }
                    })
                    .collect();
            }
            a[0]
        })
        .collect()
}

/// Full forward pass (training statistics without dropout, and inference)
/// against the composed oracle.
pub fn network_error(seed: u64, b: usize, steps: usize, width: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = NetworkConfig {
        timesteps: steps,
        width,
        hidden_channels: (3, 2),
        kernel_widths: (5, 3),
        dropout_rate: 0.0,
        seed,
        ..Default::default()
    };
    let mut m = ModelState::new(cfg).unwrap();
    m.bn1.gamma = random_tensor(&[3], 2.0, &mut rng);
    m.bn2.beta = random_tensor(&[2], 1.0, &mut rng);
    let x = random_tensor(&[b, steps, 4, 1, width], 2.0, &mut rng);
    let frozen = m.clone();
    let mut scratch = ChaCha8Rng::seed_from_u64(0);
    let got_train = network_forward(&x, &mut m, Mode::Train, &mut scratch).unwrap();
    let got_infer = network_forward(&x, &mut frozen.clone(), Mode::Infer, &mut scratch).unwrap();
    let want_train = oracle_network(&x, &frozen, true);
    let want_infer = oracle_network(&x, &frozen, false);
    (0..b)
        .map(|bi| (got_train.data()[bi] - want_train[bi]).abs().max((got_infer.data()[bi] - want_infer[bi]).abs()))
        .fold(0.0, f64::max)
}

pub struct GradCheck {
    pub checked: usize,
    pub worst_rel: f64,
    pub worst_name: String,
}

/// Central differences with step `h` on `picks` parameters of a
/// T=3, W=12, C1=C2=2 network, at least one from every tensor. Dropout uses
/// the same mask in every evaluation.
pub fn gradient_check(picks: usize, h: f64) -> GradCheck {
    let cfg = NetworkConfig { timesteps: 3, width: 12, hidden_channels: (2, 2), seed: 21, ..Default::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut m = ModelState::new(cfg).unwrap();
    // Non-trivial batch-norm scales so their gradients are exercised.
    for t in [&mut m.bn1.gamma, &mut m.bn2.gamma] {
        t.data_mut().iter_mut().for_each(|v| *v = rng.random_range(0.5..1.5));
    }
    let b = 4;
    let x = random_tensor(&[b, 3, 4, 1, 12], 2.0, &mut rng);
    let labels: Vec<f64> = (0..b).map(|i| 5.0 + i as f64 + 0.37).collect();
    let loss_at = |m: &ModelState| loss_and_gradients(&x, &labels, m, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
    let base = loss_at(&m);
    for (p, y) in base.predictions.iter().zip(&labels) {
        assert!((p - y).abs() > 1e-3, "residual too close to the MAE kink");
    }

    let flat: Vec<(usize, usize, f64)> = base
        .gradients
        .tensors
        .iter()
        .enumerate()
        .flat_map(|(ti, t)| t.data().iter().enumerate().map(move |(j, &g)| (ti, j, g)))
        .filter(|(_, _, g)| g.abs() > 1e-8)
        .collect();
    assert!(flat.len() >= picks, "only {} parameters with usable gradient", flat.len());

    let mut chosen: Vec<usize> =
        (0..base.gradients.tensors.len()).filter_map(|ti| flat.iter().position(|e| e.0 == ti)).collect();
    while chosen.len() < picks {
        chosen.push(rng.random_range(0..flat.len()));
    }

    let mut out = GradCheck { checked: 0, worst_rel: 0.0, worst_name: String::new() };
    for &pi in &chosen {
        let (ti, j, analytic) = flat[pi];
        let mut plus = m.clone();
        plus.learnable_mut()[ti].data_mut()[j] += h;
        let mut minus = m.clone();
        minus.learnable_mut()[ti].data_mut()[j] -= h;
        let numeric = (loss_at(&plus).loss - loss_at(&minus).loss) / (2.0 * h);
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs());
        out.checked += 1;
        if rel > out.worst_rel {
            out.worst_rel = rel;
            out.worst_name = format!("{}[{j}]", base.gradients.names[ti]);
        }
    }
    out
}
