//! Single-layer LSTMs with full backpropagation through time.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ops::{affine, sigmoid};
use super::tensor::Tensor;

/// One direction. Gate order in the stacked weights is input, forget, cell, output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lstm {
    pub w_ih: Tensor,
    pub w_hh: Tensor,
    pub bias: Tensor,
}

struct Step {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    /// Activated gates, `4h`.
    gates: Vec<f64>,
    tanh_c: Vec<f64>,
}

pub struct LstmCache {
    steps: Vec<Step>,
}

impl Lstm {
    pub fn new<R: Rng + ?Sized>(n_in: usize, hidden: usize, rng: &mut R) -> Self {
        let limit = 1.0 / (hidden as f64).sqrt();
        let mut bias = Tensor::uniform(&[4 * hidden], limit, rng);
        // forget gate starts open
        for b in &mut bias.values_mut()[hidden..2 * hidden] {
            *b += 1.0;
        }
        Lstm {
            w_ih: Tensor::uniform(&[4 * hidden, n_in], limit, rng),
            w_hh: Tensor::uniform(&[4 * hidden, hidden], limit, rng),
            bias,
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_hh.shape()[1]
    }

    /// Runs over `xs` in the given order, returning one hidden state per step.
    pub fn forward(&self, xs: &[&[f64]]) -> (Vec<Vec<f64>>, LstmCache) {
        let h = self.hidden();
        let mut h_prev = vec![0.0; h];
        let mut c_prev = vec![0.0; h];
        let mut outs = Vec::with_capacity(xs.len());
        let mut steps = Vec::with_capacity(xs.len());
        let mut z = vec![0.0; 4 * h];
        let mut zh = vec![0.0; 4 * h];
        let zero_bias = vec![0.0; 4 * h];
        for &x in xs {
            affine(self.w_ih.values(), self.bias.values(), x, &mut z);
            affine(self.w_hh.values(), &zero_bias, &h_prev, &mut zh);
            let mut gates = vec![0.0; 4 * h];
            let mut c = vec![0.0; h];
            let mut tanh_c = vec![0.0; h];
            let mut h_new = vec![0.0; h];
            for j in 0..h {
                let i_g = sigmoid(z[j] + zh[j]);
                let f_g = sigmoid(z[h + j] + zh[h + j]);
                let g_g = (z[2 * h + j] + zh[2 * h + j]).tanh();
                let o_g = sigmoid(z[3 * h + j] + zh[3 * h + j]);
                gates[j] = i_g;
                gates[h + j] = f_g;
                gates[2 * h + j] = g_g;
                gates[3 * h + j] = o_g;
                c[j] = f_g * c_prev[j] + i_g * g_g;
                tanh_c[j] = c[j].tanh();
                h_new[j] = o_g * tanh_c[j];
            }
            steps.push(Step {
                x: x.to_vec(),
                h_prev: std::mem::replace(&mut h_prev, h_new.clone()),
                c_prev: std::mem::replace(&mut c_prev, c),
                gates,
                tanh_c,
            });
            outs.push(h_new);
        }
        (outs, LstmCache { steps })
    }

    /// Backpropagates per-step output gradients `dhs`; returns input gradients.
    pub fn backward(&mut self, cache: &LstmCache, dhs: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let h = self.hidden();
        let n_in = self.w_ih.shape()[1];
        let mut dxs = vec![vec![0.0; n_in]; cache.steps.len()];
        let mut dh_next = vec![0.0; h];
        let mut dc_next = vec![0.0; h];
        let mut dz = vec![0.0; 4 * h];
        for t in (0..cache.steps.len()).rev() {
            let st = &cache.steps[t];
            for j in 0..h {
                let dh = dhs[t][j] + dh_next[j];
                let (i_g, f_g, g_g, o_g) =
                    (st.gates[j], st.gates[h + j], st.gates[2 * h + j], st.gates[3 * h + j]);
                let tc = st.tanh_c[j];
                let d_o = dh * tc;
                let dc = dh * o_g * (1.0 - tc * tc) + dc_next[j];
                dz[j] = dc * g_g * i_g * (1.0 - i_g);
                dz[h + j] = dc * st.c_prev[j] * f_g * (1.0 - f_g);
                dz[2 * h + j] = dc * i_g * (1.0 - g_g * g_g);
                dz[3 * h + j] = d_o * o_g * (1.0 - o_g);
                dc_next[j] = dc * f_g;
            }
            {
                let gw = self.w_ih.grad_mut();
                for (r, &g) in dz.iter().enumerate() {
                    let row = &mut gw[r * n_in..(r + 1) * n_in];
                    for (w, &x) in row.iter_mut().zip(&st.x) {
                        *w += g * x;
                    }
                }
            }
            {
                let gu = self.w_hh.grad_mut();
                for (r, &g) in dz.iter().enumerate() {
                    let row = &mut gu[r * h..(r + 1) * h];
                    for (w, &hp) in row.iter_mut().zip(&st.h_prev) {
                        *w += g * hp;
                    }
                }
            }
            for (b, &g) in self.bias.grad_mut().iter_mut().zip(&dz) {
                *b += g;
            }
            let w = self.w_ih.values();
            let dx = &mut dxs[t];
            for (r, &g) in dz.iter().enumerate() {
                let row = &w[r * n_in..(r + 1) * n_in];
                for (d, &wv) in dx.iter_mut().zip(row) {
                    *d += g * wv;
                }
            }
            let u = self.w_hh.values();
            dh_next.iter_mut().for_each(|v| *v = 0.0);
            for (r, &g) in dz.iter().enumerate() {
                let row = &u[r * h..(r + 1) * h];
                for (d, &uv) in dh_next.iter_mut().zip(row) {
                    *d += g * uv;
                }
            }
        }
        dxs
    }

    pub fn params_mut(&mut self) -> [&mut Tensor; 3] {
        [&mut self.w_ih, &mut self.w_hh, &mut self.bias]
    }
}

/// Forward and backward LSTMs over the same sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiLstm {
    pub fwd: Lstm,
    pub bwd: Lstm,
}

pub struct BiLstmCache {
    fwd: LstmCache,
    bwd: LstmCache,
}

impl BiLstm {
    pub fn new<R: Rng + ?Sized>(n_in: usize, hidden: usize, rng: &mut R) -> Self {
        BiLstm { fwd: Lstm::new(n_in, hidden, rng), bwd: Lstm::new(n_in, hidden, rng) }
    }

    pub fn hidden(&self) -> usize {
        self.fwd.hidden()
    }

    /// Per-step outputs `[h_fwd; h_bwd]` of width `2 * hidden`.
    pub fn forward(&self, xs: &[&[f64]]) -> (Vec<Vec<f64>>, BiLstmCache) {
        let (hf, cf) = self.fwd.forward(xs);
        let rev: Vec<&[f64]> = xs.iter().rev().copied().collect();
        let (mut hb, cb) = self.bwd.forward(&rev);
        hb.reverse();
        let out = hf
            .into_iter()
            .zip(hb)
            .map(|(mut a, b)| {
                a.extend(b);
                a
            })
            .collect();
        (out, BiLstmCache { fwd: cf, bwd: cb })
    }

    /// Summary vector `[last h_fwd; last h_bwd]` (the bwd state after reading
    /// the first element).
    pub fn summarize(&self, xs: &[&[f64]]) -> (Vec<f64>, BiLstmCache) {
        let (hf, cf) = self.fwd.forward(xs);
        let rev: Vec<&[f64]> = xs.iter().rev().copied().collect();
        let (hb, cb) = self.bwd.forward(&rev);
        let mut out = hf.last().cloned().unwrap_or_else(|| vec![0.0; self.hidden()]);
        out.extend(hb.last().cloned().unwrap_or_else(|| vec![0.0; self.hidden()]));
        (out, BiLstmCache { fwd: cf, bwd: cb })
    }

    pub fn backward(&mut self, cache: &BiLstmCache, douts: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let h = self.hidden();
        let n = douts.len();
        let df: Vec<Vec<f64>> = douts.iter().map(|d| d[..h].to_vec()).collect();
        let db: Vec<Vec<f64>> = douts.iter().rev().map(|d| d[h..].to_vec()).collect();
        let mut dx = self.fwd.backward(&cache.fwd, &df);
        let dxb = self.bwd.backward(&cache.bwd, &db);
        for (t, d) in dxb.into_iter().enumerate() {
            for (a, b) in dx[n - 1 - t].iter_mut().zip(d) {
                *a += b;
            }
        }
        dx
    }

    /// Backward for [`summarize`](Self::summarize).
    pub fn backward_summary(&mut self, cache: &BiLstmCache, dsum: &[f64]) -> Vec<Vec<f64>> {
        let n = cache.fwd.steps.len();
        if n == 0 {
            return Vec::new();
        }
        let h = self.hidden();
        let mut douts = vec![vec![0.0; 2 * h]; n];
        douts[n - 1][..h].copy_from_slice(&dsum[..h]);
        douts[0][h..].copy_from_slice(&dsum[h..]);
        self.backward(cache, &douts)
    }

    pub fn params_mut(&mut self) -> [&mut Tensor; 6] {
        let [a, b, c] = self.fwd.params_mut();
        let [d, e, f] = self.bwd.params_mut();
        [a, b, c, d, e, f]
    }
}
