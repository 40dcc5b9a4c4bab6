use std::collections::HashMap;

use super::matrix::Matrix;
use super::rng::Rng;
use crate::error::{Error, Result};

/// Handle into a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A named weight with its gradient accumulator and rmsprop cache.
#[derive(Clone, Debug)]
pub struct ParamTensor {
    pub name: String,
    pub value: Matrix,
    pub grad: Matrix,
    pub rms_cache: Matrix,
    pub trainable: bool,
}

impl ParamTensor {
    pub fn new(name: impl Into<String>, value: Matrix, trainable: bool) -> Self {
        let (r, c) = value.shape();
        ParamTensor {
            name: name.into(),
            value,
            grad: Matrix::zeros(r, c),
            rms_cache: Matrix::zeros(r, c),
            trainable,
        }
    }

    pub fn check_shapes(&self) -> Result<()> {
        if self.grad.shape() != self.value.shape() || self.rms_cache.shape() != self.value.shape()
        {
            return Err(Error::Shape(format!(
                "{}: value {:?}, grad {:?}, cache {:?}",
                self.name,
                self.value.shape(),
                self.grad.shape(),
                self.rms_cache.shape()
            )));
        }
        Ok(())
    }
}

/// Registry of every parameter of a model, addressed by [`ParamId`] or name.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    tensors: Vec<ParamTensor>,
    by_name: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a tensor. Panics on duplicate names.
    pub fn register(&mut self, tensor: ParamTensor) -> ParamId {
        let id = ParamId(self.tensors.len());
        let prev = self.by_name.insert(tensor.name.clone(), id);
        assert!(prev.is_none(), "duplicate parameter name {}", tensor.name);
        self.tensors.push(tensor);
        id
    }

    /// Zero-filled tensor.
    pub fn zeros(&mut self, name: &str, rows: usize, cols: usize) -> ParamId {
        self.register(ParamTensor::new(name, Matrix::zeros(rows, cols), true))
    }

    /// Uniform in `[-r, r]` with `r = sqrt(6 / (rows + cols))`.
    pub fn glorot(&mut self, name: &str, rows: usize, cols: usize, rng: &mut Rng) -> ParamId {
        let r = (6.0 / (rows + cols) as f64).sqrt();
        let value = Matrix::from_fn(rows, cols, |_, _| rng.uniform_range(-r, r));
        self.register(ParamTensor::new(name, value, true))
    }

    #[inline]
    pub fn get(&self, id: ParamId) -> &ParamTensor {
        &self.tensors[id.0]
    }

    #[inline]
    pub fn get_mut(&mut self, id: ParamId) -> &mut ParamTensor {
        &mut self.tensors[id.0]
    }

    #[inline]
    pub fn value(&self, id: ParamId) -> &Matrix {
        &self.tensors[id.0].value
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ParamTensor> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut ParamTensor> {
        self.tensors.iter_mut()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    /// Fresh zeroed gradient buffer shaped like this store.
    pub fn zero_grads(&self) -> Gradients {
        Gradients {
            grads: self
                .tensors
                .iter()
                .map(|t| Matrix::zeros(t.value.rows(), t.value.cols()))
                .collect(),
        }
    }

    /// Adds a private gradient buffer into the tensors' accumulators.
    pub fn accumulate(&mut self, grads: &Gradients) {
        assert_eq!(grads.grads.len(), self.tensors.len());
        for (t, g) in self.tensors.iter_mut().zip(&grads.grads) {
            t.grad.add_assign(g);
        }
    }

    pub fn clear_grads(&mut self) {
        self.tensors.iter_mut().for_each(|t| t.grad.fill(0.0));
    }

    /// `Σ ‖θ‖²` over trainable tensors.
    pub fn trainable_sum_squares(&self) -> f64 {
        self.tensors
            .iter()
            .filter(|t| t.trainable)
            .map(|t| t.value.sum_squares())
            .sum()
    }

    pub fn trainable_count(&self) -> usize {
        self.tensors
            .iter()
            .filter(|t| t.trainable)
            .map(|t| t.value.len())
            .sum()
    }
}

/// Gradient buffer parallel to a [`ParamStore`]; privatized per worker and
/// reduced into the store before an optimizer step.
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Matrix>,
}

impl Gradients {
    #[inline]
    pub fn get(&self, id: ParamId) -> &Matrix {
        &self.grads[id.0]
    }

    #[inline]
    pub fn get_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.grads[id.0]
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, k: f64) {
        self.grads.iter_mut().for_each(|g| g.scale(k));
    }

    pub fn max_abs(&self) -> f64 {
        self.grads.iter().map(Matrix::max_abs).fold(0.0, f64::max)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Matrix)> {
        self.grads.iter().enumerate().map(|(i, g)| (ParamId(i), g))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn glorot_respects_bound() {
        let mut store = ParamStore::new();
        let mut rng = Rng::new(1);
        let id = store.glorot("w", 4, 2, &mut rng);
        let r = 1.0f64;
        assert!(store.value(id).as_slice().iter().all(|x| x.abs() <= r));
        assert_eq!(store.id("w"), Some(id));
    }

    #[test]
    #[should_panic(expected = "duplicate")]
    fn duplicate_names_rejected() {
        let mut store = ParamStore::new();
        store.zeros("w", 1, 1);
        store.zeros("w", 1, 1);
    }

    #[test]
    fn accumulate_sums_buffers() {
        let mut store = ParamStore::new();
        let id = store.zeros("w", 1, 2);
        let mut g = store.zero_grads();
        g.get_mut(id).as_mut_slice()[1] = 3.0;
        store.accumulate(&g);
        store.accumulate(&g);
        assert_eq!(store.get(id).grad.as_slice(), &[0.0, 6.0]);
    }
}
