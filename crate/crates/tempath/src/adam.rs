//! Adam with bias correction over the flat tensor layout of `ModelParams`.

use crate::error::{Error, Result};
use crate::params::ModelParams;

#[derive(Debug, Clone)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdamState {
    cfg: AdamConfig,
    m: ModelParams,
    v: ModelParams,
    t: u64,
}

impl AdamState {
    pub fn new(model: &ModelParams, cfg: AdamConfig) -> Self {
        AdamState {
            cfg,
            m: model.zeros_like(),
            v: model.zeros_like(),
            t: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// One update. Rejects non-finite gradients, naming the offending tensor.
    pub fn step(&mut self, model: &mut ModelParams, grads: &ModelParams) -> Result<()> {
        for (name, g) in grads.tensor_names().iter().zip(grads.tensors()) {
            if g.iter().any(|x| !x.is_finite()) {
                return Err(Error::Training(format!(
                    "non-finite gradient in tensor `{name}`"
                )));
            }
        }
        self.t += 1;
        let c = &self.cfg;
        let bc1 = 1.0 - c.beta1.powi(self.t as i32);
        let bc2 = 1.0 - c.beta2.powi(self.t as i32);
        let g_all = grads.tensors();
        let m_all = self.m.tensors_mut();
        let mut v_iter = self.v.tensors_mut().into_iter();
        let mut p_iter = model.tensors_mut().into_iter();
        for ((_, m), g) in m_all.into_iter().zip(g_all) {
            let (_, v) = v_iter.next().unwrap();
            let (_, p) = p_iter.next().unwrap();
            for i in 0..p.len() {
                m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
                v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= c.lr * m_hat / (v_hat.sqrt() + c.eps);
            }
        }
        Ok(())
    }
}
