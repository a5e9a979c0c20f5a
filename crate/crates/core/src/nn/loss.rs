//! Binary cross-entropy on a 2-logit softmax head and reconstruction MSE.

use super::dense::sigmoid;

/// Logit differences are clamped to `±LOGIT_CLAMP` before the log.
pub const LOGIT_CLAMP: f64 = 30.0;

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Success probability from the two head logits, i.e. softmax component 1.
pub fn success_probability(logits: &[f64]) -> f64 {
    sigmoid(logits[1] - logits[0])
}

/// BCE for one sample from head logits. Returns the loss and `dL/dlogits`.
/// Outside the clamp the gradient is zero.
pub fn bce_with_logits(logits: &[f64], label: bool) -> (f64, [f64; 2]) {
    let diff = logits[1] - logits[0];
    let d = diff.clamp(-LOGIT_CLAMP, LOGIT_CLAMP);
    let loss = if label { softplus(-d) } else { softplus(d) };
    let g = if diff.abs() > LOGIT_CLAMP {
        0.0
    } else {
        sigmoid(d) - if label { 1.0 } else { 0.0 }
    };
    (loss, [-g, g])
}

/// BCE of a probability; clamped to the same range as the logit form.
pub fn bce_probability(p: f64, label: bool) -> f64 {
    let lo = sigmoid(-LOGIT_CLAMP);
    let p = p.clamp(lo, 1.0 - lo);
    if label {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Mean squared error and its gradient with respect to `pred`.
pub fn mse(pred: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    assert_eq!(pred.len(), target.len(), "mse shape");
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let d = p - t;
            loss += d * d;
            2.0 * d / n
        })
        .collect();
    (loss / n, grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_probability_is_ln2() {
        let (l1, _) = bce_with_logits(&[0.0, 0.0], true);
        let (l0, _) = bce_with_logits(&[0.3, 0.3], false);
        assert!((l1 - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((l0 - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(success_probability(&[0.0, 0.0]), 0.5);
    }

    #[test]
    fn perfect_prediction_zero_loss() {
        assert_eq!(bce_probability(1.0, true), bce_probability(0.0, false));
        assert!(bce_probability(1.0, true) < 1e-12);
        let (l, g) = bce_with_logits(&[0.0, 100.0], true);
        assert!(l < 1e-12);
        assert_eq!(g, [0.0, 0.0]);
    }

    #[test]
    fn probability_monotone_in_logit_gap() {
        let mut prev = 0.0;
        for k in -20..=20 {
            let p = success_probability(&[0.0, k as f64 * 0.5]);
            assert!(p > prev);
            prev = p;
        }
    }

    #[test]
    fn extreme_logits_finite() {
        let (l, _) = bce_with_logits(&[1e6, -1e6], true);
        assert!(l.is_finite() && (l - 30.0).abs() < 1e-9);
    }

    #[test]
    fn mse_values() {
        let (l, g) = mse(&[1.0, 2.0], &[0.0, 2.0]);
        assert_eq!(l, 0.5);
        assert_eq!(g, vec![1.0, 0.0]);
    }
}
