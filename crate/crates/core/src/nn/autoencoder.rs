use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dense::{Activation, Dense};
use super::tensor::{Params, Tensor};

/// Bottleneck width for the time-aggregated setting.
pub const AGGREGATED_CODE_DIM: usize = 32;
/// Per-timestep bottleneck width for the time-series setting.
pub const SERIES_CODE_DIM: usize = 25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub dense: Dense,
    pub activation: Activation,
}

/// Dense layers applied in sequence, each followed by its activation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseStack {
    pub layers: Vec<Layer>,
}

impl DenseStack {
    /// `dims` lists the input width followed by every layer's output width.
    pub fn new(dims: &[usize], activations: &[Activation], rng: &mut impl Rng) -> Self {
        assert_eq!(dims.len(), activations.len() + 1, "one activation per layer");
        let layers = dims
            .windows(2)
            .zip(activations)
            .map(|(w, &activation)| Layer {
                dense: Dense::new(w[0], w[1], rng),
                activation,
            })
            .collect();
        DenseStack { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].dense.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("nonempty stack").dense.output_dim()
    }

    /// Outputs of every layer; the last entry is the stack output.
    pub fn forward_trace(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut outs: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let input = outs.last().map(Vec::as_slice).unwrap_or(x);
            let mut y = layer.dense.forward(input);
            y.iter_mut().for_each(|v| *v = layer.activation.apply(*v));
            outs.push(y);
        }
        outs
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.forward_trace(x).pop().expect("nonempty stack")
    }

    pub fn backward(&self, x: &[f64], outs: &[Vec<f64>], dy: &[f64], grad: &mut DenseStack) -> Vec<f64> {
        let mut d = dy.to_vec();
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            for (dv, y) in d.iter_mut().zip(&outs[k]) {
                *dv *= layer.activation.grad_from_output(*y);
            }
            let input = if k == 0 { x } else { &outs[k - 1] };
            d = layer.dense.backward(input, &d, &mut grad.layers[k].dense);
        }
        d
    }
}

impl Params for DenseStack {
    fn tensors(&self) -> Vec<&Tensor> {
        self.layers.iter().flat_map(|l| l.dense.tensors()).collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers.iter_mut().flat_map(|l| l.dense.tensors_mut()).collect()
    }
}

/// Stacked autoencoder with a symmetric decoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Autoencoder {
    pub encoder: DenseStack,
    pub decoder: DenseStack,
}

/// Forward activations of one autoencoder pass.
#[derive(Debug, Clone)]
pub struct AutoencoderTrace {
    pub encoder: Vec<Vec<f64>>,
    pub decoder: Vec<Vec<f64>>,
}

impl AutoencoderTrace {
    pub fn code(&self) -> &[f64] {
        self.encoder.last().expect("nonempty encoder")
    }

    pub fn reconstruction(&self) -> &[f64] {
        self.decoder.last().expect("nonempty decoder")
    }
}

impl Autoencoder {
    /// `input → hidden → code`, mirrored back. Inputs are scaled to `[0, 1]`
    /// so the reconstruction ends in a sigmoid.
    pub fn new(input: usize, hidden: usize, code: usize, rng: &mut impl Rng) -> Self {
        Autoencoder {
            encoder: DenseStack::new(&[input, hidden, code], &[Activation::Tanh, Activation::Sigmoid], rng),
            decoder: DenseStack::new(&[code, hidden, input], &[Activation::Tanh, Activation::Sigmoid], rng),
        }
    }

    pub fn aggregated(input: usize, rng: &mut impl Rng) -> Self {
        Self::new(input, 64, AGGREGATED_CODE_DIM, rng)
    }

    pub fn series(input: usize, rng: &mut impl Rng) -> Self {
        Self::new(input, 48, SERIES_CODE_DIM, rng)
    }

    /// Single-layer identity encoder and decoder of width `n`.
    pub fn identity(n: usize) -> Self {
        let eye = |n: usize| {
            let mut w = Tensor::zeros(&[n, n]);
            for i in 0..n {
                w.data_mut()[i * n + i] = 1.0;
            }
            Layer {
                dense: Dense {
                    weight: w,
                    bias: Tensor::zeros(&[n]),
                },
                activation: Activation::Identity,
            }
        };
        Autoencoder {
            encoder: DenseStack { layers: vec![eye(n)] },
            decoder: DenseStack { layers: vec![eye(n)] },
        }
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    pub fn code_dim(&self) -> usize {
        self.encoder.output_dim()
    }

    pub fn encode(&self, x: &[f64]) -> Vec<f64> {
        self.encoder.forward(x)
    }

    pub fn trace(&self, x: &[f64]) -> AutoencoderTrace {
        let encoder = self.encoder.forward_trace(x);
        let decoder = self.decoder.forward_trace(encoder.last().expect("nonempty encoder"));
        AutoencoderTrace { encoder, decoder }
    }

    /// `(representation, reconstruction)`
    pub fn autoencode(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut tr = self.trace(x);
        (tr.encoder.pop().unwrap(), tr.decoder.pop().unwrap())
    }

    /// Backward through decoder and encoder. `d_code` is any gradient
    /// arriving at the code from downstream, `d_recon` the reconstruction
    /// loss gradient. Returns `dL/dx`.
    pub fn backward(
        &self,
        x: &[f64],
        trace: &AutoencoderTrace,
        d_code: &[f64],
        d_recon: &[f64],
        grad: &mut Autoencoder,
    ) -> Vec<f64> {
        let mut dc = self
            .decoder
            .backward(trace.code(), &trace.decoder, d_recon, &mut grad.decoder);
        for (a, b) in dc.iter_mut().zip(d_code) {
            *a += b;
        }
        self.encoder.backward(x, &trace.encoder, &dc, &mut grad.encoder)
    }
}

impl Params for Autoencoder {
    fn tensors(&self) -> Vec<&Tensor> {
        let mut t = self.encoder.tensors();
        t.extend(self.decoder.tensors());
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut t = self.encoder.tensors_mut();
        t.extend(self.decoder.tensors_mut());
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::loss::mse;
    use crate::nn::optim::Adam;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_reconstructs() {
        let ae = Autoencoder::identity(4);
        let x = [0.1, 0.7, 0.0, 1.0];
        let (code, recon) = ae.autoencode(&x);
        assert_eq!(code, x);
        assert_eq!(mse(&recon, &x).0, 0.0);
    }

    #[test]
    fn bottleneck_widths() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = Autoencoder::aggregated(104, &mut rng);
        let s = Autoencoder::series(63, &mut rng);
        assert_eq!((a.code_dim(), a.decoder.output_dim()), (32, 104));
        assert_eq!((s.code_dim(), s.decoder.output_dim()), (25, 63));
    }

    #[test]
    fn reconstruction_loss_decreases_early() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut ae = Autoencoder::new(8, 6, 3, &mut rng);
        let batch: Vec<Vec<f64>> = (0..16)
            .map(|i| (0..8).map(|j| ((i * 3 + j * 5) % 7) as f64 / 7.0).collect())
            .collect();
        let mut opt = Adam::new(ae.num_params(), 1e-3);
        let mut prev = f64::INFINITY;
        for _ in 0..50 {
            let mut grad = ae.zeros_like();
            let mut loss = 0.0;
            for x in &batch {
                let tr = ae.trace(x);
                let (l, dr) = mse(tr.reconstruction(), x);
                loss += l / batch.len() as f64;
                let dr: Vec<f64> = dr.iter().map(|g| g / batch.len() as f64).collect();
                ae.backward(x, &tr, &[0.0; 3], &dr, &mut grad);
            }
            assert!(loss < prev, "loss rose: {loss} after {prev}");
            prev = loss;
            let mut flat = ae.to_flat();
            opt.step(&mut flat, &grad.to_flat());
            ae.set_flat(&flat);
        }
    }
}
