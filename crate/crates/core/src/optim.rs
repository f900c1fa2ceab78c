//! Adaptive-moment (Adam) parameter updates.

use alloc::vec;
use alloc::vec::Vec;

use libm::sqrt;

use crate::error::{CoreError, Result};
use crate::tensor::Tensor;

/// Bias-corrected Adam. State shapes are fixed by the first `step` call.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Result<Self> {
        Self::with_hyper(lr, 0.9, 0.999, 1e-8)
    }

    pub fn with_hyper(lr: f64, beta1: f64, beta2: f64, eps: f64) -> Result<Self> {
        if lr <= 0.0 {
            return Err(CoreError::InvalidArgument("learning rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) {
            return Err(CoreError::InvalidArgument("betas must lie in [0, 1)".into()));
        }
        Ok(Adam { lr, beta1, beta2, eps, t: 0, m: Vec::new(), v: Vec::new() })
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// One update over `params`, reading each tensor's grad slot. Tensors
    /// without a gradient are treated as having zero gradient.
    pub fn step(&mut self, params: &mut [&mut Tensor]) -> Result<()> {
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![0.0; p.numel()]).collect();
            self.v = params.iter().map(|p| vec![0.0; p.numel()]).collect();
        }
        if self.m.len() != params.len() {
            return Err(CoreError::ShapeMismatch("optimizer state does not match parameter list".into()));
        }
        self.t += 1;
        let bc1 = 1.0 - libm::pow(self.beta1, self.t as f64);
        let bc2 = 1.0 - libm::pow(self.beta2, self.t as f64);
        for (idx, p) in params.iter_mut().enumerate() {
            if self.m[idx].len() != p.numel() {
                return Err(CoreError::ShapeMismatch("optimizer moment shape differs from parameter".into()));
            }
            let Some(grad) = p.grad() else { continue };
            let grad = grad.to_vec();
            let (m, v) = (&mut self.m[idx], &mut self.v[idx]);
            let data = p.data_mut();
            for i in 0..data.len() {
                let g = grad[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                data[i] -= self.lr * mhat / (sqrt(vhat) + self.eps);
            }
        }
        Ok(())
    }
}
