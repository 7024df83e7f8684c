use serde::{Deserialize, Serialize};

use crate::error::{check_len, Result};
use crate::scalar::Scalar;
use crate::tensor::{Parameters, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Applied only to tensors with two or more dimensions.
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.98,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// Adam moments with decoupled weight decay.
///
/// Moments are stored per tensor in parameter traversal order, so the same
/// optimizer must always be stepped with the same parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW<T> {
    pub config: AdamWConfig,
    step: u64,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
}

impl<T: Scalar> AdamW<T> {
    pub fn new<P: Parameters<T>>(params: &P, config: AdamWConfig) -> Self {
        let mut first = Vec::new();
        params.visit("", &mut |_, t| first.push(vec![T::zero(); t.len()]));
        let second = first.clone();
        Self {
            config,
            step: 0,
            first,
            second,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Vec<T>] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Vec<T>] {
        &self.second
    }

    /// One update with learning rate `lr`.
    pub fn step<P: Parameters<T>>(&mut self, params: &mut P, grads: &P, lr: f64) -> Result<()> {
        let grads: Vec<&Tensor<T>> = grads.named_tensors().into_iter().map(|(_, t)| t).collect();
        check_len("gradient tensors", self.first.len(), grads.len())?;
        self.step += 1;
        let cfg = self.config;
        let (b1, b2) = (T::lit(cfg.beta1), T::lit(cfg.beta2));
        let (one_b1, one_b2) = (T::lit(1.0 - cfg.beta1), T::lit(1.0 - cfg.beta2));
        let bc1 = T::lit(1.0 - cfg.beta1.powi(self.step as i32));
        let bc2 = T::lit(1.0 - cfg.beta2.powi(self.step as i32));
        let lr_t = T::lit(lr);
        let eps = T::lit(cfg.eps);
        let mut index = 0;
        let mut shape_error = None;
        params.visit_mut("", &mut |_, p| {
            let g = grads[index];
            if g.len() != p.len() {
                shape_error.get_or_insert((p.len(), g.len()));
                index += 1;
                return;
            }
            let decay = if p.shape().len() >= 2 {
                T::lit(1.0 - lr * cfg.weight_decay)
            } else {
                T::one()
            };
            let (m, v) = (&mut self.first[index], &mut self.second[index]);
            for (((pv, &gv), mv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                *mv = b1 * *mv + one_b1 * gv;
                *vv = b2 * *vv + one_b2 * gv * gv;
                let m_hat = *mv / bc1;
                let v_hat = *vv / bc2;
                *pv = *pv * decay - lr_t * m_hat / (v_hat.sqrt() + eps);
            }
            index += 1;
        });
        if let Some((expected, actual)) = shape_error {
            check_len("gradient tensor", expected, actual)?;
        }
        Ok(())
    }
}

/// Euclidean norm over every gradient tensor.
pub fn global_grad_norm<T: Scalar, P: Parameters<T>>(grads: &P) -> f64 {
    let mut sum = 0.0;
    grads.visit("", &mut |_, t| sum += t.sum_squares().as_f64());
    sum.sqrt()
}

/// Rescale `grads` so their global norm is at most `max_norm`. Returns the
/// norm before clipping. An infinite threshold leaves the gradients untouched.
pub fn clip_grad_norm<T: Scalar, P: Parameters<T>>(grads: &mut P, max_norm: f64) -> f64 {
    let norm = global_grad_norm(grads);
    if max_norm.is_finite() && norm > max_norm {
        let scale = T::lit(max_norm / norm);
        grads.visit_mut("", &mut |_, t| t.data_mut().iter_mut().for_each(|v| *v *= scale));
    }
    norm
}
