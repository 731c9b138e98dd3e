//! Adam with decoupled weight decay.

use std::collections::BTreeMap;

use super::{Params, Result, Tensor, TensorError};

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 5e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-4,
        }
    }
}

/// Per-parameter first/second moment buffers plus the step counter.
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    m: BTreeMap<String, Tensor>,
    v: BTreeMap<String, Tensor>,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update over every parameter that has a gradient. Decay is
    /// decoupled: `w -= lr * wd * w` before the Adam delta.
    pub fn step(&mut self, params: &mut Params, grads: &BTreeMap<String, Tensor>) -> Result<()> {
        self.step += 1;
        let t = self.step as f64;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powf(t);
        let bc2 = 1.0 - c.beta2.powf(t);
        for (name, grad) in grads {
            let param = params.get_mut(name).ok_or_else(|| {
                TensorError::InvalidArgument(format!("adam: unknown parameter {name}"))
            })?;
            if param.shape() != grad.shape() {
                return Err(TensorError::ShapeMismatch(format!(
                    "adam: {name} param {:?} vs grad {:?}",
                    param.shape(),
                    grad.shape()
                )));
            }
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(param.shape()));
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(param.shape()));
            let pd = param.data_mut();
            for i in 0..pd.len() {
                pd[i] -= c.lr * c.weight_decay * pd[i];
                let g = grad.data()[i];
                let mi = c.beta1 * m.data()[i] + (1.0 - c.beta1) * g;
                let vi = c.beta2 * v.data()[i] + (1.0 - c.beta2) * g * g;
                m.data_mut()[i] = mi;
                v.data_mut()[i] = vi;
                let mhat = mi / bc1;
                let vhat = vi / bc2;
                pd[i] -= c.lr * mhat / (vhat.sqrt() + c.eps);
            }
            if !param.is_finite() {
                return Err(TensorError::NonFinite(format!("adam update of {name}")));
            }
        }
        Ok(())
    }
}
