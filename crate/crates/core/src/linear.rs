//! L1 / L2 regularized logistic regression.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::sigmoid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Penalty {
    L1,
    L2,
}

impl Penalty {
    pub fn as_str(self) -> &'static str {
        match self {
            Penalty::L1 => "l1",
            Penalty::L2 => "l2",
        }
    }

    /// `λ‖w‖₁` or `(λ/2)‖w‖²`.
    pub fn value(self, lambda: f64, w: &[f64]) -> f64 {
        match self {
            Penalty::L1 => lambda * w.iter().map(|v| v.abs()).sum::<f64>(),
            Penalty::L2 => 0.5 * lambda * w.iter().map(|v| v * v).sum::<f64>(),
        }
    }
}

impl FromStr for Penalty {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l1" => Ok(Penalty::L1),
            "l2" => Ok(Penalty::L2),
            _ => Err(Error::Config(format!("unknown penalty `{s}` (expected l1 or l2)"))),
        }
    }
}

impl fmt::Display for Penalty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Regularization strengths tried on the validation split.
pub const LAMBDA_GRID: [f64; 5] = [1e-4, 1e-3, 1e-2, 1e-1, 1.0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub record_history: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            tol: 1e-7,
            max_iter: 20_000,
            record_history: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub penalty: Penalty,
    pub lambda: f64,
    pub iterations: usize,
    pub objective: f64,
    /// False when `max_iter` was reached before the stopping rule held.
    pub converged: bool,
    /// Objective after every accepted iteration, when requested.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub history: Vec<f64>,
}

impl LinearModel {
    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        sigmoid(self.margin(x))
    }

    fn margin(&self, x: &[f64]) -> f64 {
        self.intercept + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }
}

/// Mean log-loss over the rows and its gradient `(∂/∂w, ∂/∂b)`.
pub fn log_loss_and_grad(x: &[Vec<f64>], y: &[bool], w: &[f64], b: f64) -> (f64, Vec<f64>, f64) {
    let n = x.len() as f64;
    let mut loss = 0.0;
    let mut gw = vec![0.0; w.len()];
    let mut gb = 0.0;
    for (row, &label) in x.iter().zip(y) {
        let z = b + row.iter().zip(w).map(|(a, c)| a * c).sum::<f64>();
        // log(1 + e^z) − y z, stable for large |z|
        let softplus = if z > 0.0 {
            z + (-z).exp().ln_1p()
        } else {
            z.exp().ln_1p()
        };
        let t = if label { 1.0 } else { 0.0 };
        loss += softplus - t * z;
        let r = sigmoid(z) - t;
        gb += r;
        for (g, v) in gw.iter_mut().zip(row) {
            *g += r * v;
        }
    }
    gw.iter_mut().for_each(|g| *g /= n);
    (loss / n, gw, gb / n)
}

pub fn objective(x: &[Vec<f64>], y: &[bool], w: &[f64], b: f64, penalty: Penalty, lambda: f64) -> f64 {
    log_loss_and_grad(x, y, w, b).0 + penalty.value(lambda, w)
}

fn validate(x: &[Vec<f64>], y: &[bool], lambda: f64) -> Result<usize> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("{} rows for {} labels", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::Invalid("logistic regression needs at least two rows".into()));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Config(format!(
            "regularization strength must be ≥ 0, got {lambda}"
        )));
    }
    let d = x[0].len();
    if x.iter().any(|r| r.len() != d || r.iter().any(|v| !v.is_finite())) {
        return Err(Error::Invalid("design rows must be finite and equally wide".into()));
    }
    let pos = y.iter().filter(|v| **v).count();
    if pos == 0 || pos == y.len() {
        return Err(Error::SingleClass);
    }
    Ok(d)
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Largest violation of the L1 optimality conditions.
pub fn l1_kkt_violation(grad_w: &[f64], grad_b: f64, w: &[f64], lambda: f64) -> f64 {
    let mut worst = grad_b.abs();
    for (g, v) in grad_w.iter().zip(w) {
        let viol = if *v != 0.0 {
            (g + lambda * v.signum()).abs()
        } else {
            (g.abs() - lambda).max(0.0)
        };
        worst = worst.max(viol);
    }
    worst
}

/// Barzilai–Borwein step from consecutive iterates, used as the first trial
/// step of each line search.
fn bb_step(dx: &[f64], dg: &[f64], fallback: f64) -> f64 {
    let ss: f64 = dx.iter().map(|v| v * v).sum();
    let sy: f64 = dx.iter().zip(dg).map(|(a, b)| a * b).sum();
    if sy > 0.0 && ss > 0.0 {
        (ss / sy).clamp(1e-10, 1e10)
    } else {
        fallback
    }
}

/// Minimizes mean log-loss plus the penalty from a zero start. The
/// intercept is not penalized.
pub fn fit_logistic(
    x: &[Vec<f64>],
    y: &[bool],
    penalty: Penalty,
    lambda: f64,
    opts: &FitOptions,
) -> Result<LinearModel> {
    let d = validate(x, y, lambda)?;
    match penalty {
        Penalty::L2 => Ok(fit_l2(x, y, d, lambda, opts)),
        Penalty::L1 => Ok(fit_l1(x, y, d, lambda, opts)),
    }
}

// Parameters are packed as [w..., b] inside the solvers.

fn fit_l2(x: &[Vec<f64>], y: &[bool], d: usize, lambda: f64, opts: &FitOptions) -> LinearModel {
    let eval = |p: &[f64]| {
        let (l, mut gw, gb) = log_loss_and_grad(x, y, &p[..d], p[d]);
        for (g, w) in gw.iter_mut().zip(&p[..d]) {
            *g += lambda * w;
        }
        gw.push(gb);
        (l + Penalty::L2.value(lambda, &p[..d]), gw)
    };
    let mut p = vec![0.0; d + 1];
    let (mut f, mut g) = eval(&p);
    let mut step = 1.0;
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        let gnorm = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if gnorm < opts.tol {
            converged = true;
            break;
        }
        iterations += 1;
        let g2: f64 = g.iter().map(|v| v * v).sum();
        let mut t = step;
        let (p_new, f_new, g_new) = loop {
            let cand: Vec<f64> = p.iter().zip(&g).map(|(a, b)| a - t * b).collect();
            let (fc, gc) = eval(&cand);
            if fc <= f - 0.5 * t * g2 || t < 1e-14 {
                break (cand, fc, gc);
            }
            t *= 0.5;
        };
        let dx: Vec<f64> = p_new.iter().zip(&p).map(|(a, b)| a - b).collect();
        let dg: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        step = bb_step(&dx, &dg, t);
        p = p_new;
        f = f_new;
        g = g_new;
        if opts.record_history {
            history.push(f);
        }
    }
    LinearModel {
        weights: p[..d].to_vec(),
        intercept: p[d],
        penalty: Penalty::L2,
        lambda,
        iterations,
        objective: f,
        converged,
        history,
    }
}

fn fit_l1(x: &[Vec<f64>], y: &[bool], d: usize, lambda: f64, opts: &FitOptions) -> LinearModel {
    let smooth = |p: &[f64]| {
        let (l, mut gw, gb) = log_loss_and_grad(x, y, &p[..d], p[d]);
        gw.push(gb);
        (l, gw)
    };
    let prox = |p: &[f64], g: &[f64], t: f64| -> Vec<f64> {
        let mut out: Vec<f64> = (0..d).map(|j| soft_threshold(p[j] - t * g[j], t * lambda)).collect();
        out.push(p[d] - t * g[d]);
        out
    };
    let mut p = vec![0.0; d + 1];
    let (mut fs, mut g) = smooth(&p);
    let mut obj = fs + Penalty::L1.value(lambda, &p[..d]);
    let mut step = 1.0;
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        iterations += 1;
        let mut t = step;
        let (p_new, fs_new, g_new) = loop {
            let cand = prox(&p, &g, t);
            let (fc, gc) = smooth(&cand);
            let diff: Vec<f64> = cand.iter().zip(&p).map(|(a, b)| a - b).collect();
            let lin: f64 = diff.iter().zip(&g).map(|(a, b)| a * b).sum();
            let quad: f64 = diff.iter().map(|v| v * v).sum::<f64>() / (2.0 * t);
            if fc <= fs + lin + quad || t < 1e-14 {
                break (cand, fc, gc);
            }
            t *= 0.5;
        };
        let obj_new = fs_new + Penalty::L1.value(lambda, &p_new[..d]);
        let dx: Vec<f64> = p_new.iter().zip(&p).map(|(a, b)| a - b).collect();
        let dg: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        step = bb_step(&dx, &dg, t);
        let change = (obj - obj_new).abs();
        p = p_new;
        fs = fs_new;
        g = g_new;
        obj = obj_new;
        if opts.record_history {
            history.push(obj);
        }
        if change < opts.tol && l1_kkt_violation(&g[..d], g[d], &p[..d], lambda) < opts.tol {
            converged = true;
            break;
        }
    }
    LinearModel {
        weights: p[..d].to_vec(),
        intercept: p[d],
        penalty: Penalty::L1,
        lambda,
        iterations,
        objective: obj,
        converged,
        history,
    }
}

/// Mean validation log-loss of a fitted model.
pub fn validation_loss(model: &LinearModel, x: &[Vec<f64>], y: &[bool]) -> f64 {
    log_loss_and_grad(x, y, &model.weights, model.intercept).0
}

/// Fits every λ in `grid` on the training rows and keeps the one with the
/// lowest validation log-loss. Ties go to the larger λ.
pub fn select_lambda(
    train: (&[Vec<f64>], &[bool]),
    val: (&[Vec<f64>], &[bool]),
    penalty: Penalty,
    grid: &[f64],
    opts: &FitOptions,
) -> Result<(LinearModel, Vec<(f64, f64)>)> {
    let mut best: Option<(LinearModel, f64)> = None;
    let mut scores = Vec::new();
    for &lambda in grid {
        let model = fit_logistic(train.0, train.1, penalty, lambda, opts)?;
        let loss = validation_loss(&model, val.0, val.1);
        scores.push((lambda, loss));
        if best.as_ref().is_none_or(|(_, b)| loss <= *b) {
            best = Some((model, loss));
        }
    }
    let (model, _) = best.ok_or_else(|| Error::Config("empty regularization grid".into()))?;
    Ok((model, scores))
}

/// Features ranked by absolute coefficient, ties kept in column order.
pub fn top_coefficients(model: &LinearModel, names: &[String], k: usize) -> Vec<(String, f64)> {
    let mut idx: Vec<usize> = (0..model.weights.len()).collect();
    idx.sort_by(|&a, &b| model.weights[b].abs().total_cmp(&model.weights[a].abs()));
    idx.into_iter()
        .take(k)
        .map(|i| (names[i].clone(), model.weights[i]))
        .collect()
}

/// Coefficient report: name, coefficient, rank by magnitude.
pub fn coefficient_report(model: &LinearModel, names: &[String]) -> String {
    let mut s = String::from("feature,coefficient,rank\n");
    for (rank, (name, w)) in top_coefficients(model, names, names.len()).into_iter().enumerate() {
        s.push_str(&format!("{name},{w},{}\n", rank + 1));
    }
    s
}
