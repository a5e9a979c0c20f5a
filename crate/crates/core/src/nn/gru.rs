use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dense::sigmoid;
use super::tensor::{dot, matvec_acc, matvec_t_acc, outer_acc, Params, Tensor};

/// One GRU layer. Row blocks of the `3H` rows are update `z`, reset `r`
/// and candidate `n`:
///
/// ```text
/// z = σ(Wz x + Uz h + bz)
/// r = σ(Wr x + Ur h + br)
/// n = tanh(Wn x + Un (r ⊙ h) + bn)
/// h' = z ⊙ h + (1 − z) ⊙ n
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GruLayer {
    pub w_input: Tensor,
    pub w_hidden: Tensor,
    pub bias: Tensor,
}

#[derive(Debug, Clone)]
pub struct GruTrace {
    pub steps: usize,
    pub hidden_size: usize,
    /// `T × H`
    pub hidden: Vec<f64>,
    initial: Vec<f64>,
    /// `T × 3H`: z, r, n
    gates: Vec<f64>,
}

impl GruTrace {
    pub fn hidden_at(&self, t: usize) -> &[f64] {
        &self.hidden[t * self.hidden_size..(t + 1) * self.hidden_size]
    }

    pub fn final_hidden(&self) -> &[f64] {
        self.hidden_at(self.steps - 1)
    }

    fn prev(&self, t: usize) -> &[f64] {
        if t == 0 {
            &self.initial
        } else {
            self.hidden_at(t - 1)
        }
    }
}

impl GruLayer {
    pub fn new(input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        GruLayer {
            w_input: Tensor::glorot(3 * hidden, input, rng),
            w_hidden: Tensor::orthogonal(3 * hidden, hidden, rng),
            bias: Tensor::zeros(&[3 * hidden]),
        }
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        GruLayer {
            w_input: Tensor::zeros(&[3 * hidden, input]),
            w_hidden: Tensor::zeros(&[3 * hidden, hidden]),
            bias: Tensor::zeros(&[3 * hidden]),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_input.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_hidden.cols()
    }

    fn cell(&self, x: &[f64], h: &[f64], gates: &mut [f64], h_out: &mut [f64]) {
        let hs = self.hidden_dim();
        let u = self.w_hidden.data();
        let mut a = self.bias.data().to_vec();
        matvec_acc(self.w_input.data(), self.input_dim(), x, &mut a);
        matvec_acc(&u[..2 * hs * hs], hs, h, &mut a[..2 * hs]);
        for v in a[..2 * hs].iter_mut() {
            *v = sigmoid(*v);
        }
        let rh: Vec<f64> = (0..hs).map(|j| a[hs + j] * h[j]).collect();
        for j in 0..hs {
            let row = &u[(2 * hs + j) * hs..(2 * hs + j + 1) * hs];
            a[2 * hs + j] = (a[2 * hs + j] + dot(row, &rh)).tanh();
        }
        for j in 0..hs {
            let z = a[j];
            h_out[j] = z * h[j] + (1.0 - z) * a[2 * hs + j];
        }
        gates.copy_from_slice(&a);
    }

    /// A single cell application from state `h`.
    pub fn step(&self, x: &[f64], h: &[f64]) -> Vec<f64> {
        let hs = self.hidden_dim();
        let mut gates = vec![0.0; 3 * hs];
        let mut out = vec![0.0; hs];
        self.cell(x, h, &mut gates, &mut out);
        out
    }

    pub fn forward(&self, xs: &[f64], steps: usize) -> GruTrace {
        self.forward_from(xs, steps, &vec![0.0; self.hidden_dim()])
    }

    pub fn forward_from(&self, xs: &[f64], steps: usize, h0: &[f64]) -> GruTrace {
        let hs = self.hidden_dim();
        let input = self.input_dim();
        assert_eq!(xs.len(), steps * input, "gru input shape");
        let mut trace = GruTrace {
            steps,
            hidden_size: hs,
            hidden: vec![0.0; steps * hs],
            initial: h0.to_vec(),
            gates: vec![0.0; steps * 3 * hs],
        };
        let mut h = h0.to_vec();
        for t in 0..steps {
            let x = &xs[t * input..(t + 1) * input];
            let (gates, hidden) = (
                &mut trace.gates[t * 3 * hs..(t + 1) * 3 * hs],
                &mut trace.hidden[t * hs..(t + 1) * hs],
            );
            self.cell(x, &h, gates, hidden);
            h.copy_from_slice(hidden);
        }
        trace
    }

    /// BPTT; mirrors [`crate::nn::LstmLayer::backward`].
    pub fn backward(&self, xs: &[f64], trace: &GruTrace, dh: &[f64], grad: &mut GruLayer) -> Vec<f64> {
        let hs = self.hidden_dim();
        let input = self.input_dim();
        let steps = trace.steps;
        let u = self.w_hidden.data();
        let mut dx = vec![0.0; steps * input];
        let mut dh_next = vec![0.0; hs];
        let mut da = vec![0.0; 3 * hs];
        let mut rh = vec![0.0; hs];
        let mut d_rh = vec![0.0; hs];
        for t in (0..steps).rev() {
            let g = &trace.gates[t * 3 * hs..(t + 1) * 3 * hs];
            let h_prev = trace.prev(t);
            let mut dh_prev = vec![0.0; hs];
            for j in 0..hs {
                let (z, n) = (g[j], g[2 * hs + j]);
                let dht = dh[t * hs + j] + dh_next[j];
                let dz = dht * (h_prev[j] - n);
                let dn = dht * (1.0 - z);
                dh_prev[j] = dht * z;
                da[j] = dz * z * (1.0 - z);
                da[2 * hs + j] = dn * (1.0 - n * n);
                rh[j] = g[hs + j] * h_prev[j];
            }
            // candidate path through r ⊙ h
            d_rh.fill(0.0);
            matvec_t_acc(&u[2 * hs * hs..], hs, &da[2 * hs..], &mut d_rh);
            for j in 0..hs {
                let r = g[hs + j];
                da[hs + j] = d_rh[j] * h_prev[j] * r * (1.0 - r);
                dh_prev[j] += d_rh[j] * r;
            }
            let x = &xs[t * input..(t + 1) * input];
            outer_acc(grad.w_input.data_mut(), input, &da, x);
            for (b, d) in grad.bias.data_mut().iter_mut().zip(&da) {
                *b += d;
            }
            matvec_t_acc(self.w_input.data(), input, &da, &mut dx[t * input..(t + 1) * input]);
            let gu = grad.w_hidden.data_mut();
            outer_acc(&mut gu[..2 * hs * hs], hs, &da[..2 * hs], h_prev);
            outer_acc(&mut gu[2 * hs * hs..], hs, &da[2 * hs..], &rh);
            matvec_t_acc(&u[..2 * hs * hs], hs, &da[..2 * hs], &mut dh_prev);
            dh_next = dh_prev;
        }
        dx
    }
}

impl Params for GruLayer {
    fn tensors(&self) -> Vec<&Tensor> {
        vec![&self.w_input, &self.w_hidden, &self.bias]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.w_input, &mut self.w_hidden, &mut self.bias]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_parameters_halve_state() {
        let layer = GruLayer::zeros(2, 1);
        let tr = layer.forward_from(&[0.3, -1.0, 2.0, 0.5, 0.0, 0.0], 3, &[0.8]);
        assert_eq!(tr.hidden, vec![0.4, 0.2, 0.1]);
    }

    #[test]
    fn single_step_equals_cell() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let layer = GruLayer::new(3, 4, &mut rng);
        let x = [0.1, -0.7, 0.4];
        let tr = layer.forward(&x, 1);
        assert_eq!(tr.hidden, layer.step(&x, &[0.0; 4]));
    }

    #[test]
    fn hidden_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let layer = GruLayer::new(2, 5, &mut rng);
        let xs: Vec<f64> = (0..60).map(|i| ((i * 7) % 11) as f64 * 50.0 - 250.0).collect();
        let tr = layer.forward(&xs, 30);
        assert!(tr.hidden.iter().all(|h| h.abs() < 1.0 + 1e-15));
    }
}
