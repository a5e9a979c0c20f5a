use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dense::sigmoid;
use super::tensor::{matvec_acc, matvec_t_acc, outer_acc, Params, Tensor};

/// One LSTM layer. Gate blocks of the `4H` rows are ordered input, forget,
/// cell candidate, output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmLayer {
    pub w_input: Tensor,
    pub w_hidden: Tensor,
    pub bias: Tensor,
}

/// Activations kept from the forward pass for BPTT.
#[derive(Debug, Clone)]
pub struct LstmTrace {
    pub steps: usize,
    pub hidden_size: usize,
    /// `T × H`
    pub hidden: Vec<f64>,
    cells: Vec<f64>,
    tanh_cells: Vec<f64>,
    /// `T × 4H`, post-activation
    gates: Vec<f64>,
}

impl LstmTrace {
    pub fn hidden_at(&self, t: usize) -> &[f64] {
        &self.hidden[t * self.hidden_size..(t + 1) * self.hidden_size]
    }

    pub fn cell_at(&self, t: usize) -> &[f64] {
        &self.cells[t * self.hidden_size..(t + 1) * self.hidden_size]
    }

    pub fn final_hidden(&self) -> &[f64] {
        self.hidden_at(self.steps - 1)
    }
}

impl LstmLayer {
    /// Forget-gate bias starts at 1.0; other parameters uniform(−k, k) with
    /// `k = 1/√fan_in`.
    pub fn new(input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let mut layer = LstmLayer {
            w_input: Tensor::glorot(4 * hidden, input, rng),
            w_hidden: Tensor::orthogonal(4 * hidden, hidden, rng),
            bias: Tensor::zeros(&[4 * hidden]),
        };
        layer.bias.data_mut()[hidden..2 * hidden].fill(1.0);
        layer
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        LstmLayer {
            w_input: Tensor::zeros(&[4 * hidden, input]),
            w_hidden: Tensor::zeros(&[4 * hidden, hidden]),
            bias: Tensor::zeros(&[4 * hidden]),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_input.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_hidden.cols()
    }

    fn gates(&self, x: &[f64], h_prev: Option<&[f64]>) -> Vec<f64> {
        let hs = self.hidden_dim();
        let mut a = self.bias.data().to_vec();
        matvec_acc(self.w_input.data(), self.input_dim(), x, &mut a);
        if let Some(h) = h_prev {
            matvec_acc(self.w_hidden.data(), hs, h, &mut a);
        }
        for (j, v) in a.iter_mut().enumerate() {
            *v = if (2 * hs..3 * hs).contains(&j) {
                v.tanh()
            } else {
                sigmoid(*v)
            };
        }
        a
    }

    /// A single cell application from state `(h, c)`.
    pub fn step(&self, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let hs = self.hidden_dim();
        let g = self.gates(x, Some(h));
        let mut c_new = vec![0.0; hs];
        let mut h_new = vec![0.0; hs];
        for j in 0..hs {
            c_new[j] = g[hs + j] * c[j] + g[j] * g[2 * hs + j];
            h_new[j] = g[3 * hs + j] * c_new[j].tanh();
        }
        (h_new, c_new)
    }

    /// Runs the recurrence over `steps` rows of `xs` from zero state.
    pub fn forward(&self, xs: &[f64], steps: usize) -> LstmTrace {
        let hs = self.hidden_dim();
        let input = self.input_dim();
        assert_eq!(xs.len(), steps * input, "lstm input shape");
        let mut trace = LstmTrace {
            steps,
            hidden_size: hs,
            hidden: vec![0.0; steps * hs],
            cells: vec![0.0; steps * hs],
            tanh_cells: vec![0.0; steps * hs],
            gates: vec![0.0; steps * 4 * hs],
        };
        for t in 0..steps {
            let x = &xs[t * input..(t + 1) * input];
            let g = if t == 0 {
                self.gates(x, None)
            } else {
                self.gates(x, Some(&trace.hidden[(t - 1) * hs..t * hs]))
            };
            for j in 0..hs {
                let c_prev = if t == 0 { 0.0 } else { trace.cells[(t - 1) * hs + j] };
                let c = g[hs + j] * c_prev + g[j] * g[2 * hs + j];
                let tc = c.tanh();
                trace.cells[t * hs + j] = c;
                trace.tanh_cells[t * hs + j] = tc;
                trace.hidden[t * hs + j] = g[3 * hs + j] * tc;
            }
            trace.gates[t * 4 * hs..(t + 1) * 4 * hs].copy_from_slice(&g);
        }
        trace
    }

    /// BPTT. `dh` is `dL/dh_t` from outside the layer for every step.
    /// Accumulates into `grad`, returns `dL/dx` (`T × I`).
    pub fn backward(&self, xs: &[f64], trace: &LstmTrace, dh: &[f64], grad: &mut LstmLayer) -> Vec<f64> {
        let hs = self.hidden_dim();
        let input = self.input_dim();
        let steps = trace.steps;
        let mut dx = vec![0.0; steps * input];
        let mut dh_next = vec![0.0; hs];
        let mut dc_next = vec![0.0; hs];
        let mut da = vec![0.0; 4 * hs];
        for t in (0..steps).rev() {
            let g = &trace.gates[t * 4 * hs..(t + 1) * 4 * hs];
            for j in 0..hs {
                let i = g[j];
                let f = g[hs + j];
                let cand = g[2 * hs + j];
                let o = g[3 * hs + j];
                let tc = trace.tanh_cells[t * hs + j];
                let c_prev = if t == 0 { 0.0 } else { trace.cells[(t - 1) * hs + j] };
                let dht = dh[t * hs + j] + dh_next[j];
                let d_o = dht * tc;
                let dc = dht * o * (1.0 - tc * tc) + dc_next[j];
                da[j] = dc * cand * i * (1.0 - i);
                da[hs + j] = dc * c_prev * f * (1.0 - f);
                da[2 * hs + j] = dc * i * (1.0 - cand * cand);
                da[3 * hs + j] = d_o * o * (1.0 - o);
                dc_next[j] = dc * f;
            }
            let x = &xs[t * input..(t + 1) * input];
            outer_acc(grad.w_input.data_mut(), input, &da, x);
            for (b, d) in grad.bias.data_mut().iter_mut().zip(&da) {
                *b += d;
            }
            matvec_t_acc(self.w_input.data(), input, &da, &mut dx[t * input..(t + 1) * input]);
            dh_next.fill(0.0);
            if t > 0 {
                let h_prev = &trace.hidden[(t - 1) * hs..t * hs];
                outer_acc(grad.w_hidden.data_mut(), hs, &da, h_prev);
                matvec_t_acc(self.w_hidden.data(), hs, &da, &mut dh_next);
            }
        }
        dx
    }
}

impl Params for LstmLayer {
    fn tensors(&self) -> Vec<&Tensor> {
        vec![&self.w_input, &self.w_hidden, &self.bias]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.w_input, &mut self.w_hidden, &mut self.bias]
    }
}
