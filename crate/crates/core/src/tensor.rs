//! Dense row-major tensors and named parameter traversal.

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![T::zero(); n],
        }
    }

    pub fn filled(shape: &[usize], value: T) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "tensor data does not match shape {shape:?}"
        );
        Self {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn uniform<R: Rng>(shape: &[usize], bound: f64, rng: &mut R) -> Self {
        let dist = Uniform::new_inclusive(-bound, bound);
        let n = shape.iter().product();
        let data = (0..n).map(|_| T::lit(dist.sample(rng))).collect();
        Self::from_vec(shape, data)
    }

    pub fn normal<R: Rng>(shape: &[usize], std: f64, rng: &mut R) -> Self {
        let dist = Normal::new(0.0, std).expect("valid std");
        let n = shape.iter().product();
        let data = (0..n).map(|_| T::lit(dist.sample(rng))).collect();
        Self::from_vec(shape, data)
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.shape)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn fill(&mut self, value: T) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }

    pub fn sum_squares(&self) -> T {
        self.data.iter().map(|&v| v * v).sum()
    }
}

/// Anything that owns a fixed, ordered set of named parameter tensors.
///
/// The traversal order is part of the contract: optimizers, gradient
/// buffers and checkpoints all rely on two calls visiting the same
/// tensors in the same order.
pub trait Parameters<T: Scalar> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor<T>));
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Tensor<T>));

    fn named_tensors(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        self.visit("", &mut |name, t| out.push((name, t)));
        out
    }

    fn zero_grad(&mut self) {
        self.visit_mut("", &mut |_, t| t.fill(T::zero()));
    }

    fn num_parameters(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, t| n += t.len());
        n
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}
