//! Named parameter tensors and their gradients.
//!
//! All parameters, bias tables included, live in one flat store so the
//! optimizer, the checkpoint writer, and finite-difference probes can walk
//! them uniformly. Vectors are stored as single-row matrices.

use ndarray::Array2;
use rand::Rng;

#[derive(Debug, Clone)]
pub struct Tensor {
    pub name: String,
    pub data: Array2<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    tensors: Vec<Tensor>,
}

/// Per-parameter gradients, parallel to the store's tensor list.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub tensors: Vec<Array2<f64>>,
}

impl ParamStore {
    /// Register a tensor with uniform init in [-scale, scale].
    pub fn uniform<R: Rng>(
        &mut self,
        name: &str,
        rows: usize,
        cols: usize,
        scale: f64,
        rng: &mut R,
    ) -> usize {
        let data = Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-scale..=scale));
        self.push(name, data)
    }

    pub fn zeros(&mut self, name: &str, rows: usize, cols: usize) -> usize {
        self.push(name, Array2::zeros((rows, cols)))
    }

    pub fn ones(&mut self, name: &str, rows: usize, cols: usize) -> usize {
        self.push(name, Array2::ones((rows, cols)))
    }

    pub fn push(&mut self, name: &str, data: Array2<f64>) -> usize {
        self.tensors.push(Tensor { name: name.to_string(), data });
        self.tensors.len() - 1
    }

    pub fn get(&self, idx: usize) -> &Array2<f64> {
        &self.tensors[idx].data
    }

    pub fn get_mut(&mut self, idx: usize) -> &mut Array2<f64> {
        &mut self.tensors[idx].data
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn find(&self, name: &str) -> Option<usize> {
        self.tensors.iter().position(|t| t.name == name)
    }

    pub fn zero_gradients(&self) -> Gradients {
        Gradients {
            tensors: self.tensors.iter().map(|t| Array2::zeros(t.data.dim())).collect(),
        }
    }

    /// Plain gradient-descent update.
    pub fn sgd_step(&mut self, grads: &Gradients, lr: f64) {
        for (tensor, grad) in self.tensors.iter_mut().zip(&grads.tensors) {
            tensor.data.scaled_add(-lr, grad);
        }
    }
}

impl Gradients {
    pub fn accumulate(&mut self, other: &Gradients) {
        for (mine, theirs) in self.tensors.iter_mut().zip(&other.tensors) {
            *mine += theirs;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in &mut self.tensors {
            *t *= factor;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}
