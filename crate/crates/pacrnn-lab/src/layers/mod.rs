//! Trainable layer primitives with exact backward passes.
//!
//! Every layer follows the same pattern: a cached forward returns the values
//! the backward pass needs, and `backward` accumulates (`+=`) parameter
//! gradients into a same-shaped gradient instance of the layer and returns the
//! gradient with respect to the layer input.

mod affine;
mod lstm;
mod softmax;

pub use affine::{Activation, AffineCache, AffineLayer};
pub use lstm::{LstmCache, LstmCell};
pub use softmax::{SoftmaxHead, SoftmaxOutput};
pub(crate) use softmax::ce_logit_gradient;

use crate::tensor::Tensor;

/// Ordered access to parameter tensors. The order is the declaration order
/// used by serialization, gradient accumulation and the optimizer.
pub trait Parameterized {
    fn parameters(&self) -> Vec<&Tensor>;
    fn parameters_mut(&mut self) -> Vec<&mut Tensor>;

    fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|t| t.len()).sum()
    }

    /// Same structure with every parameter set to zero; used as a gradient
    /// or velocity accumulator.
    fn zeros_like(&self) -> Self
    where
        Self: Clone,
    {
        let mut z = self.clone();
        for p in z.parameters_mut() {
            p.fill(0.0);
        }
        z
    }
}

/// One tensor per parameter tensor of the owning structure, same shapes.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub tensors: Vec<Tensor>,
}

impl Gradients {
    pub fn of<P: Parameterized>(grads: &P) -> Self {
        Gradients { tensors: grads.parameters().into_iter().cloned().collect() }
    }

    pub fn zeros_for<P: Parameterized>(params: &P) -> Self {
        Gradients {
            tensors: params.parameters().into_iter().map(|t| Tensor::zeros(t.shape())).collect(),
        }
    }

    pub fn is_congruent<P: Parameterized>(&self, params: &P) -> bool {
        let ps = params.parameters();
        ps.len() == self.tensors.len()
            && ps.iter().zip(&self.tensors).all(|(p, g)| p.shape() == g.shape())
    }

    pub fn is_zero(&self) -> bool {
        self.tensors.iter().all(|t| t.data().iter().all(|&v| v == 0.0))
    }

    pub fn norm(&self) -> f64 {
        self.tensors.iter().map(|t| t.sum_squares()).sum::<f64>().sqrt()
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Flat view helpers for finite-difference checks.
pub fn flat_get<P: Parameterized>(p: &P, mut index: usize) -> f64 {
    for t in p.parameters() {
        if index < t.len() {
            return t.data()[index];
        }
        index -= t.len();
    }
    panic!("parameter index out of range");
}

pub fn flat_set<P: Parameterized>(p: &mut P, mut index: usize, value: f64) {
    for t in p.parameters_mut() {
        if index < t.len() {
            t.data_mut()[index] = value;
            return;
        }
        index -= t.len();
    }
    panic!("parameter index out of range");
}
