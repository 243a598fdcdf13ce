use serde::{Deserialize, Serialize};

use super::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: u64,
}

impl AdamState {
    pub fn new(params: &[Tensor]) -> Self {
        let zeros = || params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        Self { m: zeros(), v: zeros(), t: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }
}

/// One bias-corrected Adam update applied in place.
pub fn adam_step(params: &mut [Tensor], grads: &[Tensor], state: &mut AdamState, cfg: &AdamConfig) {
    assert_eq!(params.len(), grads.len(), "one gradient per parameter");
    state.t += 1;
    let bc1 = 1.0 - cfg.beta1.powi(state.t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(state.t as i32);
    for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        assert_eq!(p.shape(), g.shape(), "parameter {k} shape");
        let m = state.m[k].data_mut();
        let v = state.v[k].data_mut();
        for (i, (pv, gv)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gv;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gv * gv;
            let mhat = m[i] / bc1;
            let vhat = v[i] / bc2;
            *pv -= cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
        }
    }
}
