//! Trainable parameters and the Adam update.

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// A trainable tensor with its gradient accumulator and Adam moments.
#[derive(Debug, Clone)]
pub struct Parameter {
    name: String,
    value: Tensor,
    grad: Tensor,
    adam_m: Tensor,
    adam_v: Tensor,
    step_count: u64,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        let shape = value.shape().to_vec();
        Parameter {
            name: name.into(),
            value,
            grad: Tensor::zeros(shape.clone()),
            adam_m: Tensor::zeros(shape.clone()),
            adam_v: Tensor::zeros(shape),
            step_count: 0,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn value(&self) -> &Tensor {
        &self.value
    }

    /// Replace the value, keeping optimizer state. Shape must match.
    pub fn set_value(&mut self, value: Tensor) -> Result<()> {
        if value.shape() != self.value.shape() {
            return Err(Error::ShapeMismatch {
                op: "parameter set_value",
                lhs: self.value.shape().to_vec(),
                rhs: value.shape().to_vec(),
            });
        }
        self.value = value;
        Ok(())
    }

    pub fn grad(&self) -> &Tensor {
        &self.grad
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Add a gradient contribution (shapes must match).
    pub fn accumulate_grad(&mut self, g: &Tensor) -> Result<()> {
        if g.shape() != self.value.shape() {
            return Err(Error::ShapeMismatch {
                op: "parameter grad",
                lhs: self.value.shape().to_vec(),
                rhs: g.shape().to_vec(),
            });
        }
        for (dst, src) in self.grad.data_mut().iter_mut().zip(g.data()) {
            *dst += src;
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        for g in self.grad.data_mut() {
            *g = 0.0;
        }
    }
}

/// Adam hyperparameters. The learning rate is the tunable knob; the moment
/// decays and epsilon use the common defaults.
#[derive(Debug, Clone, Copy)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamHyper {
    pub fn with_lr(lr: f64) -> Self {
        AdamHyper {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper::with_lr(2e-4)
    }
}

/// One bias-corrected Adam step over a set of parameters.
///
/// All gradients are validated before anything mutates, so a failed call
/// leaves every parameter untouched. Gradients are zeroed after the update.
pub fn adam_step<'a, I>(params: I, hyper: &AdamHyper) -> Result<()>
where
    I: IntoIterator<Item = &'a mut Parameter>,
{
    let params: Vec<&'a mut Parameter> = params.into_iter().collect();
    for p in &params {
        if let Some(idx) = p.grad.data().iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("gradient of parameter '{}' at entry {}", p.name, idx),
            });
        }
    }
    for p in params {
        p.step_count += 1;
        let t = p.step_count as i32;
        let bc1 = 1.0 - hyper.beta1.powi(t);
        let bc2 = 1.0 - hyper.beta2.powi(t);
        let g = p.grad.data().to_vec();
        let m = p.adam_m.data_mut();
        for (mi, gi) in m.iter_mut().zip(&g) {
            *mi = hyper.beta1 * *mi + (1.0 - hyper.beta1) * gi;
        }
        let m = p.adam_m.data().to_vec();
        let v = p.adam_v.data_mut();
        for (vi, gi) in v.iter_mut().zip(&g) {
            *vi = hyper.beta2 * *vi + (1.0 - hyper.beta2) * gi * gi;
        }
        let v = p.adam_v.data().to_vec();
        let value = p.value.data_mut();
        for i in 0..value.len() {
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            value[i] -= hyper.lr * m_hat / (v_hat.sqrt() + hyper.eps);
        }
        p.zero_grad();
    }
    Ok(())
}
