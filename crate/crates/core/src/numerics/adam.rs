use serde::{Deserialize, Serialize};

use super::{Param, ParamSet, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 3e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First/second moment estimates for one parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Tensor,
    pub v: Tensor,
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(shape: &[usize], cfg: AdamConfig) -> Self {
        Self {
            m: Tensor::zeros(shape),
            v: Tensor::zeros(shape),
            step: 0,
            lr: cfg.lr,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.eps,
        }
    }

    /// Bias-corrected Adam update; clears the gradient afterwards.
    pub fn step(&mut self, param: &mut Param) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (m, v) = (self.m.data_mut(), self.v.data_mut());
        let g = param.grad.data();
        for (i, w) in param.value.data_mut().iter_mut().enumerate() {
            m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
            v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
            let mhat = m[i] / bc1;
            let vhat = v[i] / bc2;
            *w -= self.lr * mhat / (vhat.sqrt() + self.eps);
        }
        param.zero_grad();
    }
}

/// Adam over every parameter of a [`ParamSet`].
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub states: Vec<AdamState>,
}

impl Adam {
    pub fn new(params: &ParamSet, cfg: AdamConfig) -> Self {
        let states = params.iter().map(|(_, p)| AdamState::new(p.value.shape(), cfg)).collect();
        Self { states }
    }

    pub fn step(&mut self, params: &mut ParamSet) {
        for (state, param) in self.states.iter_mut().zip(params.iter_mut()) {
            state.step(param);
        }
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.states.iter_mut().for_each(|s| s.lr = lr);
    }
}
