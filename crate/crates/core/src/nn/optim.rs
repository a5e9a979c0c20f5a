//! RMSprop and Adam over flat parameter vectors.

use serde::{Deserialize, Serialize};

pub const DEFAULT_LEARNING_RATE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmsProp {
    pub lr: f64,
    pub rho: f64,
    pub eps: f64,
    cache: Vec<f64>,
}

impl RmsProp {
    pub fn new(n: usize, lr: f64) -> Self {
        RmsProp {
            lr,
            rho: 0.9,
            eps: 1e-8,
            cache: vec![0.0; n],
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        assert!(
            params.len() == self.cache.len() && grad.len() == params.len(),
            "optimizer shape"
        );
        for ((p, g), c) in params.iter_mut().zip(grad).zip(&mut self.cache) {
            *c = self.rho * *c + (1.0 - self.rho) * g * g;
            *p -= self.lr * g / (c.sqrt() + self.eps);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        assert!(
            params.len() == self.m.len() && grad.len() == params.len(),
            "optimizer shape"
        );
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}
