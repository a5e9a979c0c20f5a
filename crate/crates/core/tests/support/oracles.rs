//! Independent reference implementations. None of these call into the
//! library code they are compared against.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Probability that a random positive outranks a random negative, ties
/// counting one half, by enumerating every pair.
pub fn brute_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0usize;
    for (i, &si) in scores.iter().enumerate() {
        if !labels[i] {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] {
                continue;
            }
            pairs += 1;
            if si > sj {
                wins += 1.0;
            } else if si == sj {
                wins += 0.5;
            }
        }
    }
    wins / pairs as f64
}

/// Random scores drawn from a small value set so ties are common, with both
/// classes present.
pub fn tied_scores(rng: &mut ChaCha8Rng, n: usize) -> (Vec<f64>, Vec<bool>) {
    let levels = rng.random_range(2..=12);
    let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
    labels[0] = true;
    labels[1] = false;
    let scores = (0..n)
        .map(|_| rng.random_range(0..levels) as f64 / levels as f64)
        .collect();
    (scores, labels)
}

/// Outcome by scanning every MAP observation against the two closed
/// windows. `None` when either window is empty.
pub fn scan_label(map: &[(i64, f64)], start: i64) -> Option<bool> {
    let mut peak: Option<f64> = None;
    let mut baseline = Vec::new();
    for &(t, v) in map {
        if start <= t && t <= start + 120 {
            peak = Some(match peak {
                Some(p) if p >= v => p,
                _ => v,
            });
        }
        if start - 30 <= t && t <= start + 10 {
            baseline.push(v);
        }
    }
    let peak = peak?;
    if baseline.is_empty() {
        return None;
    }
    let mut sum = 0.0;
    for v in &baseline {
        sum += v;
    }
    Some(peak > 1.15 * (sum / baseline.len() as f64))
}

/// Random MAP series around an FBT at `start`. Roughly one in five is a
/// boundary case whose peak equals 1.15 × the baseline mean exactly, or
/// sits one ulp above it, and some have an empty window.
pub fn random_map_series(rng: &mut ChaCha8Rng, start: i64) -> Vec<(i64, f64)> {
    let kind = rng.random_range(0..10);
    if kind < 2 {
        // baseline values with an exactly representable mean
        let level = rng.random_range(40..70) as f64;
        let mut series: Vec<(i64, f64)> = [-30, -20, -10, 0, 5, 10]
            .iter()
            .map(|&dt| (start + dt, level))
            .collect();
        let threshold = 1.15 * level;
        let peak = if kind == 0 {
            threshold
        } else {
            f64::from_bits(threshold.to_bits() + 1)
        };
        series.push((start + 60, peak));
        series.push((start + 90, level));
        return series;
    }
    let n = rng.random_range(0..40);
    let mut series = Vec::with_capacity(n);
    let base = rng.random_range(45.0..65.0);
    for _ in 0..n {
        let t = start + rng.random_range(-90..=180);
        let v = base + rng.random_range(-8.0..25.0);
        series.push((t, (v * 4.0_f64).round() / 4.0));
    }
    // exact window edges are the likely off-by-one sites
    for dt in [-31, -30, 10, 11, 120, 121] {
        if rng.random_bool(0.3) {
            series.push((start + dt, base + rng.random_range(-5.0..30.0)));
        }
    }
    series.sort_by_key(|p| p.0);
    series
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mean log-loss plus `lambda / 2 · ‖w‖²` (intercept unpenalized).
pub fn ridge_objective(x: &[Vec<f64>], y: &[bool], w: &[f64], b: f64, lambda: f64) -> f64 {
    let mut total = 0.0;
    for (row, &label) in x.iter().zip(y) {
        let z: f64 = b + row.iter().zip(w).map(|(a, c)| a * c).sum::<f64>();
        let p = sigmoid(z);
        total -= if label { p.ln() } else { (1.0 - p).ln() };
    }
    total / x.len() as f64 + 0.5 * lambda * w.iter().map(|v| v * v).sum::<f64>()
}

fn solve(mut a: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Vec<f64> {
    let n = rhs.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        rhs.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            let pivot_row = a[col].clone();
            for (x, p) in a[row][col..].iter_mut().zip(&pivot_row[col..]) {
                *x -= f * p;
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut out = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * out[k]).sum();
        out[row] = (rhs[row] - s) / a[row][row];
    }
    out
}

/// Ridge-logistic minimizer by damped Newton iterations to machine
/// precision. Returns `(w, b)`.
pub fn newton_ridge(x: &[Vec<f64>], y: &[bool], lambda: f64) -> (Vec<f64>, f64) {
    let n = x.len() as f64;
    let d = x[0].len();
    let mut theta = vec![0.0; d + 1];
    for _ in 0..200 {
        let mut grad = vec![0.0; d + 1];
        let mut hess = vec![vec![0.0; d + 1]; d + 1];
        for (row, &label) in x.iter().zip(y) {
            let mut xe = row.clone();
            xe.push(1.0);
            let z: f64 = xe.iter().zip(&theta).map(|(a, c)| a * c).sum();
            let p = sigmoid(z);
            let r = p - if label { 1.0 } else { 0.0 };
            for i in 0..=d {
                grad[i] += r * xe[i] / n;
                for j in 0..=d {
                    hess[i][j] += p * (1.0 - p) * xe[i] * xe[j] / n;
                }
            }
        }
        for i in 0..d {
            grad[i] += lambda * theta[i];
            hess[i][i] += lambda;
        }
        let step = solve(hess, grad.clone());
        let current = ridge_objective(x, y, &theta[..d], theta[d], lambda);
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = theta.iter().zip(&step).map(|(a, s)| a - t * s).collect();
            if ridge_objective(x, y, &trial[..d], trial[d], lambda) <= current || t < 1e-10 {
                theta = trial;
                break;
            }
            t *= 0.5;
        }
        if step.iter().map(|s| s.abs()).fold(0.0, f64::max) < 1e-15 {
            break;
        }
    }
    let b = theta.pop().unwrap();
    (theta, b)
}

/// Largest violation of the lasso optimality conditions for mean log-loss
/// plus `lambda · ‖w‖₁`: zero intercept gradient; `∇_j = −λ·sign(w_j)` on
/// the support; `|∇_j| ≤ λ` off it.
pub fn lasso_kkt(x: &[Vec<f64>], y: &[bool], w: &[f64], b: f64, lambda: f64) -> f64 {
    let n = x.len() as f64;
    let mut gw = vec![0.0; w.len()];
    let mut gb = 0.0;
    for (row, &label) in x.iter().zip(y) {
        let z: f64 = b + row.iter().zip(w).map(|(a, c)| a * c).sum::<f64>();
        let r = sigmoid(z) - if label { 1.0 } else { 0.0 };
        gb += r / n;
        for (g, v) in gw.iter_mut().zip(row) {
            *g += r * v / n;
        }
    }
    let mut worst = gb.abs();
    for (g, &wj) in gw.iter().zip(w) {
        let v = if wj == 0.0 {
            (g.abs() - lambda).max(0.0)
        } else {
            (g + lambda * wj.signum()).abs()
        };
        worst = worst.max(v);
    }
    worst
}

/// Random logistic problem with `n` rows and `d` standard-normal-ish
/// features and labels drawn from a planted model.
pub fn logistic_problem(rng: &mut ChaCha8Rng, n: usize, d: usize) -> (Vec<Vec<f64>>, Vec<bool>) {
    let truth: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
    loop {
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.random_range(-1.5..1.5)).collect())
            .collect();
        let y: Vec<bool> = x
            .iter()
            .map(|r| {
                let z: f64 = r.iter().zip(&truth).map(|(a, c)| a * c).sum();
                rng.random_bool(sigmoid(z))
            })
            .collect();
        let pos = y.iter().filter(|v| **v).count();
        if pos > 0 && pos < n {
            return (x, y);
        }
    }
}
