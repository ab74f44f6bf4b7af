use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamId, ParamStore, Tensor};
use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment estimates, one pair per parameter.
#[derive(Debug, Clone)]
pub struct AdamState<T: Scalar> {
    pub config: AdamConfig,
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
    pub step: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(store: &ParamStore<T>, config: AdamConfig) -> Self {
        let zeros: Vec<Tensor<T>> = store.iter().map(|p| Tensor::zeros(p.value.shape())).collect();
        Self {
            config,
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }

    /// One bias-corrected update. Fails before touching anything if a
    /// gradient is non-finite.
    pub fn update(&mut self, store: &mut ParamStore<T>, grads: &[Tensor<T>], lr: f64) -> Result<()> {
        if grads.len() != store.len() {
            return Err(Error::Shape {
                op: "adam_step",
                left: vec![store.len()],
                right: vec![grads.len()],
            });
        }
        for (pid, g) in grads.iter().enumerate() {
            let id = ParamId(pid);
            if g.shape() != store.get(id).shape() {
                return Err(Error::Shape {
                    op: "adam_step",
                    left: store.get(id).shape().to_vec(),
                    right: g.shape().to_vec(),
                });
            }
            if !g.is_finite() {
                return Err(Error::NonFiniteGradient {
                    param: store.name(id).to_string(),
                });
            }
        }
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let b1 = T::from_f64_lossy(c.beta1);
        let b2 = T::from_f64_lossy(c.beta2);
        let one = T::one();
        let lr_t = T::from_f64_lossy(lr);
        let eps = T::from_f64_lossy(c.eps);
        let corr1 = T::from_f64_lossy(1.0 - c.beta1.powi(t));
        let corr2 = T::from_f64_lossy(1.0 - c.beta2.powi(t));
        for (pid, g) in grads.iter().enumerate() {
            let theta = store.get_mut(ParamId(pid)).data_mut();
            let m = self.m[pid].data_mut();
            let v = self.v[pid].data_mut();
            for (k, &gk) in g.data().iter().enumerate() {
                m[k] = b1 * m[k] + (one - b1) * gk;
                v[k] = b2 * v[k] + (one - b2) * gk * gk;
                let m_hat = m[k] / corr1;
                let v_hat = v[k] / corr2;
                theta[k] = theta[k] - lr_t * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
