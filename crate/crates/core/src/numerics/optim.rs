//! Gradient-descent update rules over a [`ParamSet`].
//!
//! Both steps mutate parameters in place and zero the gradient buffers
//! afterwards, so one backward pass feeds exactly one step.

use crate::error::{CoreError, Result};
use crate::numerics::{Matrix, ParamSet};

fn check_grads(params: &ParamSet) -> Result<()> {
    if !params.grads_finite() {
        return Err(CoreError::Training(
            "non-finite gradient encountered; try a lower learning rate".into(),
        ));
    }
    Ok(())
}

/// Plain gradient descent: `p -= lr * g`.
pub fn sgd_step(params: &mut ParamSet, lr: f64) -> Result<()> {
    check_grads(params)?;
    for p in params.iter_mut() {
        for (v, g) in p.value.data_mut().iter_mut().zip(p.grad.data()) {
            *v -= lr * g;
        }
    }
    params.zero_grads();
    Ok(())
}

/// Adam optimizer state (first/second moment estimates per parameter).
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    moments: Vec<(Matrix, Matrix)>,
}

impl Adam {
    pub fn new(params: &ParamSet, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        let moments = params
            .iter()
            .map(|p| {
                let (r, c) = p.value.shape();
                (Matrix::zeros(r, c), Matrix::zeros(r, c))
            })
            .collect();
        Self {
            lr,
            beta1,
            beta2,
            eps,
            step: 0,
            moments,
        }
    }

    /// One bias-corrected Adam update; gradients are zeroed afterwards.
    pub fn step(&mut self, params: &mut ParamSet) -> Result<()> {
        check_grads(params)?;
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (p, (m, v)) in params.iter_mut().zip(self.moments.iter_mut()) {
            let value = p.value.data_mut();
            let grad = p.grad.data();
            let m = m.data_mut();
            let v = v.data_mut();
            for i in 0..value.len() {
                let g = grad[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                value[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        params.zero_grads();
        Ok(())
    }
}
