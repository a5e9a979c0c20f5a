//! Accuracy, rank-based AUC and confusion counts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

fn check(probs: &[f64], labels: &[bool]) -> Result<()> {
    if probs.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} probabilities for {} labels",
            probs.len(),
            labels.len()
        )));
    }
    if probs.is_empty() {
        return Err(Error::Invalid("no predictions to score".into()));
    }
    if probs.iter().any(|p| p.is_nan()) {
        return Err(Error::Invalid("probability is NaN".into()));
    }
    Ok(())
}

/// Fraction of cases where `prob ≥ threshold` agrees with the label.
pub fn accuracy_at(probs: &[f64], labels: &[bool], threshold: f64) -> Result<f64> {
    check(probs, labels)?;
    let hits = probs
        .iter()
        .zip(labels)
        .filter(|(p, y)| (**p >= threshold) == **y)
        .count();
    Ok(hits as f64 / probs.len() as f64)
}

pub fn accuracy(probs: &[f64], labels: &[bool]) -> Result<f64> {
    accuracy_at(probs, labels, DEFAULT_THRESHOLD)
}

/// Mann–Whitney AUC: the probability that a random positive outranks a
/// random negative, ties counting one half.
pub fn auc(probs: &[f64], labels: &[bool]) -> Result<f64> {
    check(probs, labels)?;
    let n_pos = labels.iter().filter(|y| **y).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[a].total_cmp(&probs[b]));
    // ranks are 1-based; tied groups share their mean rank
    let mut pos_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && probs[order[j + 1]] == probs[order[i]] {
            j += 1;
        }
        let mid = (i + j + 2) as f64 / 2.0;
        let pos_in_group = order[i..=j].iter().filter(|&&k| labels[k]).count();
        pos_rank_sum += mid * pos_in_group as f64;
        i = j + 1;
    }
    let u = pos_rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub true_positive: usize,
    pub false_positive: usize,
    pub true_negative: usize,
    pub false_negative: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.true_positive + self.false_positive + self.true_negative + self.false_negative
    }
}

pub fn confusion(probs: &[f64], labels: &[bool], threshold: f64) -> Result<Confusion> {
    check(probs, labels)?;
    let mut c = Confusion::default();
    for (p, y) in probs.iter().zip(labels) {
        match (*p >= threshold, *y) {
            (true, true) => c.true_positive += 1,
            (true, false) => c.false_positive += 1,
            (false, false) => c.true_negative += 1,
            (false, true) => c.false_negative += 1,
        }
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[0.9, 0.1], &[true, false]).unwrap(), 1.0);
        assert_eq!(accuracy(&[0.9, 0.1], &[false, true]).unwrap(), 0.0);
        assert_eq!(accuracy(&[0.5], &[true]).unwrap(), 1.0);
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[0.9, 0.8, 0.2, 0.1], &[true, true, false, false]).unwrap(), 1.0);
        assert_eq!(auc(&[0.3; 5], &[true, false, true, false, false]).unwrap(), 0.5);
        assert_eq!(auc(&[0.1, 0.9], &[true, false]).unwrap(), 0.0);
        // one tie across classes out of four pairs
        assert_eq!(auc(&[0.8, 0.5, 0.5, 0.2], &[true, true, false, false]).unwrap(), 0.875);
    }

    #[test]
    fn single_class_is_error() {
        assert!(matches!(auc(&[0.2, 0.4], &[true, true]), Err(Error::SingleClass)));
    }

    #[test]
    fn confusion_totals() {
        let c = confusion(&[0.9, 0.6, 0.4, 0.1, 0.5], &[true, false, true, false, true], 0.5).unwrap();
        assert_eq!(
            c,
            Confusion {
                true_positive: 2,
                false_positive: 1,
                true_negative: 1,
                false_negative: 1
            }
        );
        assert_eq!(c.total(), 5);
    }
}
