use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::{matvec_acc, matvec_t_acc, outer_acc, Params, Tensor};

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
    Sigmoid,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
        }
    }

    /// Derivative expressed through the activation's output `y`.
    #[inline]
    pub fn grad_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

/// Fully connected layer `y = W x + b`, `W` is `out × in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Dense {
    /// Uniform(−k, k) init with `k = 1/√fan_in`.
    pub fn new(input: usize, output: usize, rng: &mut impl Rng) -> Self {
        Dense {
            weight: Tensor::glorot(output, input, rng),
            bias: Tensor::zeros(&[output]),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.bias.data().to_vec();
        matvec_acc(self.weight.data(), self.input_dim(), x, &mut y);
        y
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx`.
    pub fn backward(&self, x: &[f64], dy: &[f64], grad: &mut Dense) -> Vec<f64> {
        let cols = self.input_dim();
        outer_acc(grad.weight.data_mut(), cols, dy, x);
        for (g, d) in grad.bias.data_mut().iter_mut().zip(dy) {
            *g += d;
        }
        let mut dx = vec![0.0; cols];
        matvec_t_acc(self.weight.data(), cols, dy, &mut dx);
        dx
    }
}

impl Params for Dense {
    fn tensors(&self) -> Vec<&Tensor> {
        vec![&self.weight, &self.bias]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// Inverted-dropout mask: each unit kept with probability `1 − p` and
/// scaled by `1/(1 − p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask(pub Vec<f64>);

impl DropoutMask {
    pub fn sample(n: usize, p: f64, rng: &mut impl Rng) -> Self {
        if p <= 0.0 {
            return DropoutMask(vec![1.0; n]);
        }
        let keep = 1.0 / (1.0 - p);
        DropoutMask(
            (0..n)
                .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
                .collect(),
        )
    }

    pub fn ones(n: usize) -> Self {
        DropoutMask(vec![1.0; n])
    }

    pub fn apply(&self, x: &mut [f64]) {
        for (v, m) in x.iter_mut().zip(&self.0) {
            *v *= m;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn relu_zeroes_negatives() {
        assert_eq!(Activation::Relu.apply(-3.0), 0.0);
        assert_eq!(Activation::Relu.apply(2.0), 2.0);
        assert_eq!(Activation::Relu.grad_from_output(0.0), 0.0);
    }

    #[test]
    fn sigmoid_values() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(3f64.ln()) - 0.75).abs() < 1e-15);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
    }

    #[test]
    fn dense_init_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = Dense::new(16, 4, &mut rng);
        let bound = (6.0f64 / 20.0).sqrt();
        assert!(d.weight.data().iter().all(|w| w.abs() < bound));
        assert!(d.bias.data().iter().all(|&b| b == 0.0));
    }

    #[test]
    fn dropout_expectation_matches_eval() {
        // Monte-Carlo mean of the inverted-dropout activation equals the input.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = [0.8, 1.7, 3.0];
        let trials = 200_000;
        let mut sum = [0.0; 3];
        for _ in 0..trials {
            let mut h = x;
            DropoutMask::sample(3, 0.5, &mut rng).apply(&mut h);
            for i in 0..3 {
                sum[i] += h[i];
            }
        }
        for i in 0..3 {
            let mean = sum[i] / trials as f64;
            assert!((mean - x[i]).abs() / x[i] < 0.01, "unit {i}: {mean}");
        }
    }
}
