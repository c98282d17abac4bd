use rand::Rng;
use serde::{Deserialize, Serialize};

/// Dense row-major parameter array with a gradient buffer of the same shape.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    values: Vec<f64>,
    #[serde(skip)]
    grad: Vec<f64>,
}

/// Equality ignores the gradient buffer.
impl PartialEq for Tensor {
    fn eq(&self, other: &Self) -> bool {
        self.shape == other.shape && self.values == other.values
    }
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor { shape: shape.to_vec(), values: vec![0.0; n], grad: vec![0.0; n] }
    }

    pub fn from_values(shape: &[usize], values: Vec<f64>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), values.len(), "shape/value mismatch");
        let n = values.len();
        Tensor { shape: shape.to_vec(), values, grad: vec![0.0; n] }
    }

    /// Uniform in `[-limit, limit]`.
    pub fn uniform<R: Rng + ?Sized>(shape: &[usize], limit: f64, rng: &mut R) -> Self {
        let n = shape.iter().product();
        let values = (0..n).map(|_| rng.gen_range(-limit..=limit)).collect();
        Tensor::from_values(shape, values)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn grad(&self) -> &[f64] {
        &self.grad
    }

    pub fn grad_mut(&mut self) -> &mut [f64] {
        if self.grad.len() != self.values.len() {
            self.grad = vec![0.0; self.values.len()];
        }
        &mut self.grad
    }

    /// Values and gradient together, for optimizer updates.
    pub fn split_mut(&mut self) -> (&mut [f64], &[f64]) {
        if self.grad.len() != self.values.len() {
            self.grad = vec![0.0; self.values.len()];
        }
        (&mut self.values, &self.grad)
    }

    pub fn zero_grad(&mut self) {
        self.grad.clear();
        self.grad.resize(self.values.len(), 0.0);
    }

    /// Row `i` of a 2-D tensor.
    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.shape[1];
        &self.values[i * w..(i + 1) * w]
    }

    pub fn grad_row_mut(&mut self, i: usize) -> &mut [f64] {
        let w = self.shape[1];
        &mut self.grad_mut()[i * w..(i + 1) * w]
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}
