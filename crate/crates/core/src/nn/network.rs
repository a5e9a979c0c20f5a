use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::attention::{Attention, AttentionTrace};
use super::autoencoder::{Autoencoder, AutoencoderTrace};
use super::dense::{Activation, Dense, DropoutMask};
use super::gru::{GruLayer, GruTrace};
use super::loss::{bce_with_logits, mse, success_probability};
use super::lstm::{LstmLayer, LstmTrace};
use super::tensor::{Params, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetworkKind {
    Mlp,
    Lstm,
    Gru,
}

/// Everything needed to rebuild a network's shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub kind: NetworkKind,
    /// Width of one input row (the whole vector for the MLP).
    pub input_width: usize,
    /// Rows per sample; 1 for the MLP.
    pub timesteps: usize,
    pub hidden: usize,
    pub layers: usize,
    pub attention_dim: Option<usize>,
    /// Bottleneck and hidden width of the attached autoencoder.
    pub autoencoder: Option<(usize, usize)>,
    /// Dropout after each MLP hidden layer.
    pub dropout: f64,
    /// Dropout between stacked recurrent layers.
    pub recurrent_dropout: f64,
    /// Weight of the reconstruction term in the joint loss.
    pub reconstruction_weight: f64,
}

impl Architecture {
    pub fn mlp(input: usize) -> Self {
        Architecture {
            kind: NetworkKind::Mlp,
            input_width: input,
            timesteps: 1,
            hidden: 64,
            layers: 2,
            attention_dim: None,
            autoencoder: None,
            dropout: 0.5,
            recurrent_dropout: 0.0,
            reconstruction_weight: 1.0,
        }
    }

    pub fn recurrent(kind: NetworkKind, input_width: usize, timesteps: usize, attention: bool) -> Self {
        Architecture {
            kind,
            input_width,
            timesteps,
            hidden: 32,
            layers: 3,
            attention_dim: attention.then_some(32),
            autoencoder: None,
            dropout: 0.0,
            recurrent_dropout: 0.0,
            reconstruction_weight: 1.0,
        }
    }

    pub fn sample_len(&self) -> usize {
        self.input_width * self.timesteps
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecurrentLayer {
    Lstm(LstmLayer),
    Gru(GruLayer),
}

enum RecurrentTrace {
    Lstm(LstmTrace),
    Gru(GruTrace),
}

impl RecurrentTrace {
    fn hidden(&self) -> &[f64] {
        match self {
            RecurrentTrace::Lstm(t) => &t.hidden,
            RecurrentTrace::Gru(t) => &t.hidden,
        }
    }
}

impl RecurrentLayer {
    fn forward(&self, xs: &[f64], steps: usize) -> RecurrentTrace {
        match self {
            RecurrentLayer::Lstm(l) => RecurrentTrace::Lstm(l.forward(xs, steps)),
            RecurrentLayer::Gru(l) => RecurrentTrace::Gru(l.forward(xs, steps)),
        }
    }

    fn backward(&self, xs: &[f64], trace: &RecurrentTrace, dh: &[f64], grad: &mut RecurrentLayer) -> Vec<f64> {
        match (self, trace, grad) {
            (RecurrentLayer::Lstm(l), RecurrentTrace::Lstm(t), RecurrentLayer::Lstm(g)) => l.backward(xs, t, dh, g),
            (RecurrentLayer::Gru(l), RecurrentTrace::Gru(t), RecurrentLayer::Gru(g)) => l.backward(xs, t, dh, g),
            _ => unreachable!("gradient structure mirrors the network"),
        }
    }
}

impl Params for RecurrentLayer {
    fn tensors(&self) -> Vec<&Tensor> {
        match self {
            RecurrentLayer::Lstm(l) => l.tensors(),
            RecurrentLayer::Gru(l) => l.tensors(),
        }
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        match self {
            RecurrentLayer::Lstm(l) => l.tensors_mut(),
            RecurrentLayer::Gru(l) => l.tensors_mut(),
        }
    }
}

/// Classifier parameters: the part trained with RMSprop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classifier {
    pub dense: Vec<Dense>,
    pub recurrent: Vec<RecurrentLayer>,
    pub attention: Option<Attention>,
    pub head: Dense,
}

impl Params for Classifier {
    fn tensors(&self) -> Vec<&Tensor> {
        let mut t = self.dense.tensors();
        t.extend(self.recurrent.tensors());
        t.extend(self.attention.tensors());
        t.extend(self.head.tensors());
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut t = self.dense.tensors_mut();
        t.extend(self.recurrent.tensors_mut());
        t.extend(self.attention.tensors_mut());
        t.extend(self.head.tensors_mut());
        t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub architecture: Architecture,
    pub autoencoder: Option<Autoencoder>,
    pub classifier: Classifier,
}

impl Params for Network {
    fn tensors(&self) -> Vec<&Tensor> {
        let mut t = self.autoencoder.tensors();
        t.extend(self.classifier.tensors());
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut t = self.autoencoder.tensors_mut();
        t.extend(self.classifier.tensors_mut());
        t
    }
}

/// Loss components averaged over a batch.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossParts {
    pub bce: f64,
    pub reconstruction: f64,
    pub total: f64,
}

/// Result of one inference pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub probability: f64,
    pub attention: Option<Vec<f64>>,
}

struct ClassifierTrace {
    /// Input to every dense / recurrent layer, after dropout.
    inputs: Vec<Vec<f64>>,
    masks: Vec<DropoutMask>,
    recurrent: Vec<RecurrentTrace>,
    attention: Option<AttentionTrace>,
    /// Input to the head.
    feature: Vec<f64>,
    logits: Vec<f64>,
}

impl Network {
    pub fn new(architecture: Architecture, rng: &mut impl Rng) -> Self {
        let a = &architecture;
        let autoencoder = a
            .autoencoder
            .map(|(code, hidden)| Autoencoder::new(a.input_width, hidden, code, rng));
        let width = autoencoder.as_ref().map(|ae| ae.code_dim()).unwrap_or(a.input_width);
        let mut dense = Vec::new();
        let mut recurrent = Vec::new();
        let mut attention = None;
        match a.kind {
            NetworkKind::Mlp => {
                let mut w = width;
                for _ in 0..a.layers {
                    dense.push(Dense::new(w, a.hidden, rng));
                    w = a.hidden;
                }
            }
            NetworkKind::Lstm | NetworkKind::Gru => {
                let mut w = width;
                for _ in 0..a.layers {
                    recurrent.push(match a.kind {
                        NetworkKind::Lstm => RecurrentLayer::Lstm(LstmLayer::new(w, a.hidden, rng)),
                        _ => RecurrentLayer::Gru(GruLayer::new(w, a.hidden, rng)),
                    });
                    w = a.hidden;
                }
                attention = a.attention_dim.map(|d| Attention::new(a.hidden, d, rng));
            }
        }
        let head = Dense::new(a.hidden, 2, rng);
        Network {
            classifier: Classifier {
                dense,
                recurrent,
                attention,
                head,
            },
            autoencoder,
            architecture,
        }
    }

    fn rows(&self) -> usize {
        self.architecture.timesteps
    }

    /// Bottleneck codes for every row of a sample, or the sample itself
    /// without an autoencoder.
    pub fn represent(&self, x: &[f64]) -> Vec<f64> {
        match &self.autoencoder {
            None => x.to_vec(),
            Some(ae) => x.chunks_exact(ae.input_dim()).flat_map(|row| ae.encode(row)).collect(),
        }
    }

    fn classifier_forward(&self, input: Vec<f64>, mut rng: Option<&mut ChaCha8Rng>) -> ClassifierTrace {
        let a = &self.architecture;
        let c = &self.classifier;
        let steps = self.rows();
        let mut inputs = vec![input];
        let mut masks = Vec::new();
        let mut recurrent = Vec::new();
        let mut attention = None;
        let feature;
        if a.kind == NetworkKind::Mlp {
            for layer in &c.dense {
                let mut y = layer.forward(inputs.last().unwrap());
                y.iter_mut().for_each(|v| *v = Activation::Relu.apply(*v));
                let mask = match rng.as_deref_mut() {
                    Some(r) => DropoutMask::sample(y.len(), a.dropout, r),
                    None => DropoutMask::ones(y.len()),
                };
                mask.apply(&mut y);
                masks.push(mask);
                inputs.push(y);
            }
            feature = inputs.pop().unwrap();
        } else {
            let n = c.recurrent.len();
            for (k, layer) in c.recurrent.iter().enumerate() {
                let tr = layer.forward(inputs.last().unwrap(), steps);
                if k + 1 < n {
                    let mut h = tr.hidden().to_vec();
                    let mask = match rng.as_deref_mut() {
                        Some(r) => DropoutMask::sample(h.len(), a.recurrent_dropout, r),
                        None => DropoutMask::ones(h.len()),
                    };
                    mask.apply(&mut h);
                    masks.push(mask);
                    inputs.push(h);
                }
                recurrent.push(tr);
            }
            let top = recurrent.last().unwrap().hidden();
            feature = match &c.attention {
                Some(att) => {
                    let tr = att.forward(top, steps);
                    let ctx = tr.context.clone();
                    attention = Some(tr);
                    ctx
                }
                None => top[(steps - 1) * a.hidden..].to_vec(),
            };
        }
        let logits = c.head.forward(&feature);
        ClassifierTrace {
            inputs,
            masks,
            recurrent,
            attention,
            feature,
            logits,
        }
    }

    /// Returns `dL/dinput` and accumulates classifier gradients.
    fn classifier_backward(&self, tr: &ClassifierTrace, d_logits: &[f64], grad: &mut Classifier) -> Vec<f64> {
        let a = &self.architecture;
        let c = &self.classifier;
        let steps = self.rows();
        let d_feature = c.head.backward(&tr.feature, d_logits, &mut grad.head);
        if a.kind == NetworkKind::Mlp {
            let mut d = d_feature;
            for k in (0..c.dense.len()).rev() {
                let out = if k + 1 == c.dense.len() {
                    &tr.feature
                } else {
                    &tr.inputs[k + 1]
                };
                for ((dv, y), m) in d.iter_mut().zip(out).zip(&tr.masks[k].0) {
                    *dv *= m * Activation::Relu.grad_from_output(*y);
                }
                d = c.dense[k].backward(&tr.inputs[k], &d, &mut grad.dense[k]);
            }
            return d;
        }
        let top = tr.recurrent.last().unwrap().hidden();
        let mut dh = match (&c.attention, &tr.attention) {
            (Some(att), Some(at)) => att.backward(top, at, &d_feature, grad.attention.as_mut().unwrap()),
            _ => {
                let mut dh = vec![0.0; top.len()];
                dh[(steps - 1) * a.hidden..].copy_from_slice(&d_feature);
                dh
            }
        };
        for k in (0..c.recurrent.len()).rev() {
            let mut dx = c.recurrent[k].backward(&tr.inputs[k], &tr.recurrent[k], &dh, &mut grad.recurrent[k]);
            if k > 0 {
                tr.masks[k - 1].apply(&mut dx);
            }
            dh = dx;
        }
        dh
    }

    pub fn predict(&self, x: &[f64]) -> Prediction {
        assert_eq!(x.len(), self.architecture.sample_len(), "sample width");
        let tr = self.classifier_forward(self.represent(x), None);
        Prediction {
            probability: success_probability(&tr.logits),
            attention: tr.attention.map(|a| a.weights),
        }
    }

    pub fn predict_batch(&self, xs: &[&[f64]]) -> Vec<f64> {
        xs.iter().map(|x| self.predict(x).probability).collect()
    }

    /// Forward and backward for one sample; gradients are scaled by `scale`
    /// and added to `grad`. Dropout is active when `rng` is given.
    pub fn accumulate_sample(
        &self,
        x: &[f64],
        label: bool,
        scale: f64,
        rng: Option<&mut ChaCha8Rng>,
        grad: &mut Network,
    ) -> LossParts {
        assert_eq!(x.len(), self.architecture.sample_len(), "sample width");
        let lambda = self.architecture.reconstruction_weight;
        let rows = self.rows();
        let mut ae_traces: Vec<AutoencoderTrace> = Vec::new();
        let mut recon = 0.0;
        let mut d_recon: Vec<Vec<f64>> = Vec::new();
        let input = match &self.autoencoder {
            None => x.to_vec(),
            Some(ae) => {
                let mut codes = Vec::with_capacity(rows * ae.code_dim());
                for row in x.chunks_exact(ae.input_dim()) {
                    let tr = ae.trace(row);
                    let (l, g) = mse(tr.reconstruction(), row);
                    recon += l / rows as f64;
                    d_recon.push(g.iter().map(|v| v * lambda * scale / rows as f64).collect());
                    codes.extend_from_slice(tr.code());
                    ae_traces.push(tr);
                }
                codes
            }
        };
        let tr = self.classifier_forward(input, rng);
        let (bce, dl) = bce_with_logits(&tr.logits, label);
        let d_logits = [dl[0] * scale, dl[1] * scale];
        let d_input = self.classifier_backward(&tr, &d_logits, &mut grad.classifier);
        if let (Some(ae), Some(gae)) = (&self.autoencoder, grad.autoencoder.as_mut()) {
            let code = ae.code_dim();
            for (t, (row, atr)) in x.chunks_exact(ae.input_dim()).zip(&ae_traces).enumerate() {
                ae.backward(row, atr, &d_input[t * code..(t + 1) * code], &d_recon[t], gae);
            }
        }
        LossParts {
            bce,
            reconstruction: recon,
            total: bce + lambda * recon,
        }
    }

    /// Mean loss over the batch and its gradient.
    pub fn batch_gradient(&self, batch: &[(&[f64], bool)], mut rng: Option<&mut ChaCha8Rng>) -> (LossParts, Network) {
        assert!(!batch.is_empty(), "empty batch");
        let mut grad = self.zeros_like();
        let scale = 1.0 / batch.len() as f64;
        let mut sum = LossParts::default();
        for (x, y) in batch {
            let l = self.accumulate_sample(x, *y, scale, rng.as_deref_mut(), &mut grad);
            sum.bce += l.bce * scale;
            sum.reconstruction += l.reconstruction * scale;
            sum.total += l.total * scale;
        }
        (sum, grad)
    }

    /// Mean loss without gradients and without dropout.
    pub fn loss(&self, batch: &[(&[f64], bool)]) -> LossParts {
        let lambda = self.architecture.reconstruction_weight;
        let scale = 1.0 / batch.len() as f64;
        let mut sum = LossParts::default();
        for (x, y) in batch {
            let mut recon = 0.0;
            let input = match &self.autoencoder {
                None => x.to_vec(),
                Some(ae) => {
                    let rows = self.rows() as f64;
                    let mut codes = Vec::new();
                    for row in x.chunks_exact(ae.input_dim()) {
                        let (code, r) = ae.autoencode(row);
                        recon += mse(&r, row).0 / rows;
                        codes.extend(code);
                    }
                    codes
                }
            };
            let tr = self.classifier_forward(input, None);
            let bce = bce_with_logits(&tr.logits, *y).0;
            sum.bce += bce * scale;
            sum.reconstruction += recon * scale;
            sum.total += (bce + lambda * recon) * scale;
        }
        sum
    }
}
