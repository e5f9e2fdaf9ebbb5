//! Adam with bias correction, aligned positionally with a [`Params`] list.

use crate::error::{Error, Result};
use crate::nets::Params;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(learning_rate: f64) -> Self {
        AdamConfig {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("{name} must be in [0, 1), got {b}")));
            }
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::Config(format!(
                "eps must be positive, got {}",
                self.eps
            )));
        }
        Ok(())
    }
}

/// One optimizer per parameter list; moment buffers are allocated from the
/// list's shapes and stay aligned with it by position.
pub struct Adam {
    cfg: AdamConfig,
    t: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(cfg: AdamConfig, params: &Params) -> Result<Self> {
        cfg.validate()?;
        let zeros: Vec<Tensor> = params
            .entries()
            .iter()
            .map(|(_, t)| Tensor::zeros(t.shape().to_vec()))
            .collect();
        Ok(Adam {
            cfg,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        })
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// In-place update. `grads` must align with `params` (same order and
    /// shapes), as produced by `ParamNodes::grads`.
    ///
    /// With bias corrections `c1 = 1 - beta1^t` and `c2 = 1 - beta2^t`:
    /// `p -= lr * (m/c1) / (sqrt(v/c2) + eps)`.
    pub fn step(&mut self, params: &mut Params, grads: &[Tensor]) -> Result<()> {
        if grads.len() != self.m.len() || params.len() != self.m.len() {
            return Err(Error::Validation(format!(
                "optimizer tracks {} tensors but got {} params and {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.t += 1;
        let c1 = 1.0 - self.cfg.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.cfg.beta2.powi(self.t as i32);
        for (i, param) in params.tensors_mut().enumerate() {
            if grads[i].shape() != param.shape() {
                return Err(Error::Shape(format!(
                    "gradient {i} has shape {:?}, parameter has {:?}",
                    grads[i].shape(),
                    param.shape()
                )));
            }
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            for ((p, &g), (mi, vi)) in param
                .data_mut()
                .iter_mut()
                .zip(grads[i].data())
                .zip(m.iter_mut().zip(v.iter_mut()))
            {
                *mi = self.cfg.beta1 * *mi + (1.0 - self.cfg.beta1) * g;
                *vi = self.cfg.beta2 * *vi + (1.0 - self.cfg.beta2) * g * g;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *p -= self.cfg.learning_rate * m_hat / (v_hat.sqrt() + self.cfg.eps);
            }
        }
        Ok(())
    }
}
