use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ops::{affine, gelu, gelu_grad};
use super::tensor::Tensor;

/// Fully connected layer, weight stored `out x in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    /// Glorot-uniform weights, zero bias.
    pub fn new<R: Rng + ?Sized>(n_in: usize, n_out: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (n_in + n_out) as f64).sqrt();
        Linear { weight: Tensor::uniform(&[n_out, n_in], limit, rng), bias: Tensor::zeros(&[n_out]) }
    }

    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Linear { weight: Tensor::zeros(&[n_out, n_in]), bias: Tensor::zeros(&[n_out]) }
    }

    pub fn n_in(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn n_out(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn forward(&self, x: &[f64], y: &mut [f64]) {
        affine(self.weight.values(), self.bias.values(), x, y);
    }

    /// Accumulates parameter gradients; adds `W^T dy` into `dx` when given.
    pub fn backward(&mut self, x: &[f64], dy: &[f64], dx: Option<&mut [f64]>) {
        let n_in = x.len();
        {
            let gw = self.weight.grad_mut();
            for (o, &g) in dy.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                let row = &mut gw[o * n_in..(o + 1) * n_in];
                for (r, &xi) in row.iter_mut().zip(x) {
                    *r += g * xi;
                }
            }
        }
        for (b, &g) in self.bias.grad_mut().iter_mut().zip(dy) {
            *b += g;
        }
        if let Some(dx) = dx {
            let w = self.weight.values();
            for (o, &g) in dy.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                let row = &w[o * n_in..(o + 1) * n_in];
                for (d, &wi) in dx.iter_mut().zip(row) {
                    *d += g * wi;
                }
            }
        }
    }
}

/// Two linear layers with a GELU in between.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub hidden: Linear,
    pub output: Linear,
}

/// Activations kept from a forward pass.
#[derive(Debug, Clone)]
pub struct MlpCache {
    pub input: Vec<f64>,
    pre: Vec<f64>,
    act: Vec<f64>,
    pub out: Vec<f64>,
}

impl Mlp {
    pub fn new<R: Rng + ?Sized>(n_in: usize, n_hidden: usize, n_out: usize, rng: &mut R) -> Self {
        Mlp { hidden: Linear::new(n_in, n_hidden, rng), output: Linear::new(n_hidden, n_out, rng) }
    }

    pub fn zeros(n_in: usize, n_hidden: usize, n_out: usize) -> Self {
        Mlp { hidden: Linear::zeros(n_in, n_hidden), output: Linear::zeros(n_hidden, n_out) }
    }

    pub fn forward(&self, input: Vec<f64>) -> MlpCache {
        let mut pre = vec![0.0; self.hidden.n_out()];
        self.hidden.forward(&input, &mut pre);
        let act: Vec<f64> = pre.iter().map(|&v| gelu(v)).collect();
        let mut out = vec![0.0; self.output.n_out()];
        self.output.forward(&act, &mut out);
        MlpCache { input, pre, act, out }
    }

    /// Backpropagates `dout`; returns the gradient with respect to the input.
    pub fn backward(&mut self, cache: &MlpCache, dout: &[f64]) -> Vec<f64> {
        let mut dact = vec![0.0; self.hidden.n_out()];
        self.output.backward(&cache.act, dout, Some(&mut dact));
        for (d, &p) in dact.iter_mut().zip(&cache.pre) {
            *d *= gelu_grad(p);
        }
        let mut dx = vec![0.0; cache.input.len()];
        self.hidden.backward(&cache.input, &dact, Some(&mut dx));
        dx
    }

    pub fn params_mut(&mut self) -> [&mut Tensor; 4] {
        [&mut self.hidden.weight, &mut self.hidden.bias, &mut self.output.weight, &mut self.output.bias]
    }
}
