//! Single-layer LSTM with a linear read-out, trained by backpropagation
//! through time. All parameters live in one flat vector:
//!
//! ```text
//! W  : 4H x (I + H)   gate weights, gate order i, f, g, o; columns [x | h]
//! b  : 4H
//! Wy : O x H
//! by : O
//! ```

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Samples per gradient work unit; fixes the floating-point reduction order.
const CHUNK: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lstm {
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
    pub params: Vec<f64>,
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Per-step activations kept for the backward pass.
struct Step {
    xh: Vec<f64>,
    i: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    o: Vec<f64>,
    c: Vec<f64>,
    tanh_c: Vec<f64>,
}

impl Lstm {
    pub fn n_params(input: usize, hidden: usize, output: usize) -> usize {
        4 * hidden * (input + hidden) + 4 * hidden + output * hidden + output
    }

    /// Uniform(-1/sqrt(H), 1/sqrt(H)) weights, zero biases except the
    /// forget gate, which starts at 1.
    pub fn init<R: Rng + ?Sized>(input: usize, hidden: usize, output: usize, rng: &mut R) -> Self {
        let k = 1.0 / (hidden as f64).sqrt();
        let mut net = Self {
            input,
            hidden,
            output,
            params: vec![0.0; Self::n_params(input, hidden, output)],
        };
        let (w, b, wy, _) = net.offsets();
        for p in &mut net.params[w..b] {
            *p = rng.random_range(-k..k);
        }
        for p in &mut net.params[b + hidden..b + 2 * hidden] {
            *p = 1.0;
        }
        for p in &mut net.params[wy..wy + output * hidden] {
            *p = rng.random_range(-k..k);
        }
        net
    }

    fn cols(&self) -> usize {
        self.input + self.hidden
    }

    /// Start offsets of W, b, Wy, by.
    fn offsets(&self) -> (usize, usize, usize, usize) {
        let w = 0;
        let b = 4 * self.hidden * self.cols();
        let wy = b + 4 * self.hidden;
        let by = wy + self.output * self.hidden;
        (w, b, wy, by)
    }

    pub fn w(&self) -> &[f64] {
        let (_, b, _, _) = self.offsets();
        &self.params[..b]
    }

    pub fn bias(&self) -> &[f64] {
        let (_, b, wy, _) = self.offsets();
        &self.params[b..wy]
    }

    /// Recurrent step given precomputed pre-activations `z` (4H) that
    /// already include the input contribution and bias; adds W_h h.
    pub(crate) fn cell(&self, z: &mut [f64], h: &mut [f64], c: &mut [f64]) {
        let hd = self.hidden;
        let cols = self.cols();
        let w = self.w();
        for (r, zr) in z.iter_mut().enumerate() {
            let row = &w[r * cols + self.input..(r + 1) * cols];
            *zr += row.iter().zip(h.iter()).map(|(a, b)| a * b).sum::<f64>();
        }
        for j in 0..hd {
            let i = sigmoid(z[j]);
            let f = sigmoid(z[hd + j]);
            let g = z[2 * hd + j].tanh();
            let o = sigmoid(z[3 * hd + j]);
            c[j] = f * c[j] + i * g;
            h[j] = o * c[j].tanh();
        }
    }

    pub(crate) fn head(&self, h: &[f64]) -> Vec<f64> {
        let (_, _, wy, by) = self.offsets();
        (0..self.output)
            .map(|k| {
                let row = &self.params[wy + k * self.hidden..wy + (k + 1) * self.hidden];
                self.params[by + k] + row.iter().zip(h).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect()
    }

    /// Runs the sequence `rows` (T x I, row-major) and returns the read-out
    /// of the final hidden state.
    pub fn forward(&self, rows: &[f64]) -> Vec<f64> {
        let hd = self.hidden;
        let cols = self.cols();
        let w = self.w();
        let bias = self.bias();
        let mut h = vec![0.0; hd];
        let mut c = vec![0.0; hd];
        let mut z = vec![0.0; 4 * hd];
        for x in rows.chunks_exact(self.input) {
            for (r, zr) in z.iter_mut().enumerate() {
                let row = &w[r * cols..r * cols + self.input];
                *zr = bias[r] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            }
            self.cell(&mut z, &mut h, &mut c);
        }
        self.head(&h)
    }

    fn forward_cached(&self, rows: &[f64]) -> (Vec<f64>, Vec<Step>) {
        let hd = self.hidden;
        let cols = self.cols();
        let w = self.w();
        let bias = self.bias();
        let mut h = vec![0.0; hd];
        let mut c = vec![0.0; hd];
        let mut steps = Vec::with_capacity(rows.len() / self.input);
        for x in rows.chunks_exact(self.input) {
            let mut xh = Vec::with_capacity(cols);
            xh.extend_from_slice(x);
            xh.extend_from_slice(&h);
            let z: Vec<f64> = (0..4 * hd)
                .map(|r| {
                    bias[r]
                        + w[r * cols..(r + 1) * cols]
                            .iter()
                            .zip(&xh)
                            .map(|(a, b)| a * b)
                            .sum::<f64>()
                })
                .collect();
            let i: Vec<f64> = z[..hd].iter().map(|&v| sigmoid(v)).collect();
            let f: Vec<f64> = z[hd..2 * hd].iter().map(|&v| sigmoid(v)).collect();
            let g: Vec<f64> = z[2 * hd..3 * hd].iter().map(|&v| v.tanh()).collect();
            let o: Vec<f64> = z[3 * hd..].iter().map(|&v| sigmoid(v)).collect();
            for j in 0..hd {
                c[j] = f[j] * c[j] + i[j] * g[j];
            }
            let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
            for j in 0..hd {
                h[j] = o[j] * tanh_c[j];
            }
            steps.push(Step {
                xh,
                i,
                f,
                g,
                o,
                c: c.clone(),
                tanh_c,
            });
        }
        (self.head(&h), steps)
    }

    /// Accumulates dLoss/dparams into `grad` for one sequence, given
    /// dLoss/dy.
    fn backward(&self, steps: &[Step], dy: &[f64], grad: &mut [f64]) {
        let hd = self.hidden;
        let cols = self.cols();
        let (_, b_off, wy, by) = self.offsets();
        let h_last: Vec<f64> = match steps.last() {
            Some(s) => (0..hd).map(|j| s.o[j] * s.tanh_c[j]).collect(),
            None => vec![0.0; hd],
        };

        let mut dh = vec![0.0; hd];
        for k in 0..self.output {
            grad[by + k] += dy[k];
            for j in 0..hd {
                grad[wy + k * hd + j] += dy[k] * h_last[j];
                dh[j] += dy[k] * self.params[wy + k * hd + j];
            }
        }

        let mut dc = vec![0.0; hd];
        let mut dz = vec![0.0; 4 * hd];
        for t in (0..steps.len()).rev() {
            let s = &steps[t];
            for j in 0..hd {
                let dcj = dc[j] + dh[j] * s.o[j] * (1.0 - s.tanh_c[j] * s.tanh_c[j]);
                let c_prev = if t > 0 { steps[t - 1].c[j] } else { 0.0 };
                dz[j] = dcj * s.g[j] * s.i[j] * (1.0 - s.i[j]);
                dz[hd + j] = dcj * c_prev * s.f[j] * (1.0 - s.f[j]);
                dz[2 * hd + j] = dcj * s.i[j] * (1.0 - s.g[j] * s.g[j]);
                dz[3 * hd + j] = dh[j] * s.tanh_c[j] * s.o[j] * (1.0 - s.o[j]);
                dc[j] = dcj * s.f[j];
            }
            dh.iter_mut().for_each(|v| *v = 0.0);
            for (r, &dzr) in dz.iter().enumerate() {
                if dzr == 0.0 {
                    continue;
                }
                grad[b_off + r] += dzr;
                let wrow = &self.params[r * cols..(r + 1) * cols];
                let grow = &mut grad[r * cols..(r + 1) * cols];
                for (gv, &x) in grow.iter_mut().zip(&s.xh) {
                    *gv += dzr * x;
                }
                for j in 0..hd {
                    dh[j] += dzr * wrow[self.input + j];
                }
            }
        }
    }

    /// Mean squared error over the selected samples and all outputs, and its
    /// gradient. `inputs` holds sequences of `seq_len` rows back to back.
    pub fn loss_and_grad(&self, inputs: &[f64], targets: &[f64], seq_len: usize, idx: &[usize]) -> (f64, Vec<f64>) {
        let scale = 1.0 / (idx.len() * self.output) as f64;
        let per_seq = seq_len * self.input;
        let partials: Vec<(f64, Vec<f64>)> = idx
            .par_chunks(CHUNK)
            .map(|chunk| {
                let mut grad = vec![0.0; self.params.len()];
                let mut loss = 0.0;
                for &n in chunk {
                    let (y, steps) = self.forward_cached(&inputs[n * per_seq..(n + 1) * per_seq]);
                    let t = &targets[n * self.output..(n + 1) * self.output];
                    let dy: Vec<f64> = y
                        .iter()
                        .zip(t)
                        .map(|(a, b)| {
                            loss += (a - b) * (a - b);
                            2.0 * (a - b) * scale
                        })
                        .collect();
                    self.backward(&steps, &dy, &mut grad);
                }
                (loss, grad)
            })
            .collect();
        let mut grad = vec![0.0; self.params.len()];
        let mut loss = 0.0;
        for (l, g) in partials {
            loss += l;
            grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
        }
        (loss * scale, grad)
    }

    pub fn loss(&self, inputs: &[f64], targets: &[f64], seq_len: usize, idx: &[usize]) -> f64 {
        let per_seq = seq_len * self.input;
        let sums: Vec<f64> = idx
            .par_chunks(CHUNK)
            .map(|chunk| {
                chunk
                    .iter()
                    .map(|&n| {
                        let y = self.forward(&inputs[n * per_seq..(n + 1) * per_seq]);
                        let t = &targets[n * self.output..(n + 1) * self.output];
                        y.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
                    })
                    .sum()
            })
            .collect();
        sums.iter().sum::<f64>() / (idx.len() * self.output) as f64
    }
}

/// Adaptive-moment optimizer state.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for k in 0..params.len() {
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * grad[k];
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * grad[k] * grad[k];
            params[k] -= self.lr * (self.m[k] / c1) / ((self.v[k] / c2).sqrt() + self.eps);
        }
    }
}
