use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::{dot, matvec_acc, matvec_t_acc, outer_acc, Params, Tensor};

/// Additive attention over a hidden sequence: `e_t = v · tanh(W h_t)`,
/// weights `softmax(e)`, context `Σ_t α_t h_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attention {
    /// `A × H`
    pub projection: Tensor,
    /// `A`
    pub context_vector: Tensor,
}

#[derive(Debug, Clone)]
pub struct AttentionTrace {
    pub weights: Vec<f64>,
    pub context: Vec<f64>,
    /// `T × A`
    projected: Vec<f64>,
}

pub fn softmax(x: &[f64]) -> Vec<f64> {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut e: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter_mut().for_each(|v| *v /= s);
    e
}

impl Attention {
    pub fn new(hidden: usize, dim: usize, rng: &mut impl Rng) -> Self {
        Attention {
            projection: Tensor::glorot(dim, hidden, rng),
            context_vector: Tensor::uniform(&[dim], (6.0 / (dim + 1) as f64).sqrt(), rng),
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.projection.cols()
    }

    pub fn attention_dim(&self) -> usize {
        self.projection.rows()
    }

    /// `hs` is `T × H`.
    pub fn forward(&self, hs: &[f64], steps: usize) -> AttentionTrace {
        let h = self.hidden_dim();
        let a = self.attention_dim();
        assert!(steps >= 1 && hs.len() == steps * h, "attention input shape");
        let mut projected = vec![0.0; steps * a];
        let mut scores = vec![0.0; steps];
        for t in 0..steps {
            let u = &mut projected[t * a..(t + 1) * a];
            matvec_acc(self.projection.data(), h, &hs[t * h..(t + 1) * h], u);
            u.iter_mut().for_each(|v| *v = v.tanh());
            scores[t] = dot(self.context_vector.data(), u);
        }
        let weights = softmax(&scores);
        let mut context = vec![0.0; h];
        for t in 0..steps {
            for j in 0..h {
                context[j] += weights[t] * hs[t * h + j];
            }
        }
        AttentionTrace {
            weights,
            context,
            projected,
        }
    }

    /// Returns `dL/dhs` given `dL/dcontext`.
    pub fn backward(&self, hs: &[f64], trace: &AttentionTrace, d_context: &[f64], grad: &mut Attention) -> Vec<f64> {
        let h = self.hidden_dim();
        let a = self.attention_dim();
        let steps = trace.weights.len();
        let alpha = &trace.weights;
        let d_alpha: Vec<f64> = (0..steps).map(|t| dot(d_context, &hs[t * h..(t + 1) * h])).collect();
        let mean: f64 = alpha.iter().zip(&d_alpha).map(|(a, d)| a * d).sum();
        let mut dhs = vec![0.0; steps * h];
        let mut du = vec![0.0; a];
        let v = self.context_vector.data();
        for t in 0..steps {
            let de = alpha[t] * (d_alpha[t] - mean);
            let u = &trace.projected[t * a..(t + 1) * a];
            let gv = grad.context_vector.data_mut();
            for k in 0..a {
                gv[k] += de * u[k];
                du[k] = de * v[k] * (1.0 - u[k] * u[k]);
            }
            let ht = &hs[t * h..(t + 1) * h];
            outer_acc(grad.projection.data_mut(), h, &du, ht);
            let dh = &mut dhs[t * h..(t + 1) * h];
            for j in 0..h {
                dh[j] += alpha[t] * d_context[j];
            }
            matvec_t_acc(self.projection.data(), h, &du, dh);
        }
        dhs
    }
}

impl Params for Attention {
    fn tensors(&self) -> Vec<&Tensor> {
        vec![&self.projection, &self.context_vector]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.projection, &mut self.context_vector]
    }
}
