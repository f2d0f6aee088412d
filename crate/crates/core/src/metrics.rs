//! Segment-level detection metrics with overlap as the positive class.

use alloc::format;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn add(&mut self, prediction: bool, label: bool) {
        match (prediction, label) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fn_ += 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub fscore: f64,
    pub confusion: Confusion,
    /// False when nothing was predicted positive; precision is then 0.
    pub precision_defined: bool,
    /// False when no label is positive; recall is then 0.
    pub recall_defined: bool,
}

impl Metrics {
    pub fn from_confusion(c: Confusion) -> Result<Self> {
        let total = c.total();
        if total == 0 {
            return Err(Error::arg("metrics of an empty set"));
        }
        let predicted = c.tp + c.fp;
        let actual = c.tp + c.fn_;
        let precision = if predicted > 0 { c.tp as f64 / predicted as f64 } else { 0.0 };
        let recall = if actual > 0 { c.tp as f64 / actual as f64 } else { 0.0 };
        Ok(Self {
            accuracy: (c.tp + c.tn) as f64 / total as f64,
            precision,
            recall,
            fscore: fscore(precision, recall),
            confusion: c,
            precision_defined: predicted > 0,
            recall_defined: actual > 0,
        })
    }
}

/// Harmonic mean `2PR / (P + R)`, or 0 when `P + R = 0`.
pub fn fscore(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

/// Metrics of `{0, 1}` predictions against `{0, 1}` labels.
pub fn compute_metrics(predictions: &[u8], labels: &[u8]) -> Result<Metrics> {
    if predictions.len() != labels.len() {
        return Err(Error::arg(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::arg("metrics of an empty set"));
    }
    let mut c = Confusion::default();
    for (&p, &l) in predictions.iter().zip(labels) {
        if p > 1 || l > 1 {
            return Err(Error::arg("predictions and labels must be 0 or 1"));
        }
        c.add(p == 1, l == 1);
    }
    Metrics::from_confusion(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_correct() {
        let y = [1, 0, 1, 1, 0];
        let m = compute_metrics(&y, &y).unwrap();
        assert_eq!((m.accuracy, m.precision, m.recall, m.fscore), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn hand_confusion_matrix() {
        // tp=3, fp=1, fn=2, tn=4
        let preds = [1, 1, 1, 1, 0, 0, 0, 0, 0, 0];
        let labels = [1, 1, 1, 0, 1, 1, 0, 0, 0, 0];
        let m = compute_metrics(&preds, &labels).unwrap();
        assert_eq!(m.confusion, Confusion { tp: 3, fp: 1, tn: 4, fn_: 2 });
        assert_eq!(m.precision, 0.75);
        assert_eq!(m.recall, 0.6);
        assert_eq!(m.accuracy, 0.7);
        assert!((m.fscore - 2.0 * 0.75 * 0.6 / 1.35).abs() < 1e-15);
        assert!((m.fscore - 0.6667).abs() < 1e-4);
    }

    #[test]
    fn harmonic_mean_of_reported_row() {
        assert!((fscore(0.754, 0.746) - 0.750).abs() < 5e-4);
    }

    #[test]
    fn undefined_precision_and_recall_are_flagged() {
        let m = compute_metrics(&[0, 0, 0], &[1, 0, 1]).unwrap();
        assert!(!m.precision_defined && m.recall_defined);
        assert_eq!((m.precision, m.fscore), (0.0, 0.0));
        let m = compute_metrics(&[1, 0], &[0, 0]).unwrap();
        assert!(m.precision_defined && !m.recall_defined);
        assert_eq!(m.recall, 0.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(compute_metrics(&[], &[]).is_err());
        assert!(compute_metrics(&[1], &[1, 0]).is_err());
        assert!(compute_metrics(&[2], &[1]).is_err());
    }

    #[test]
    fn exhaustive_recount_small_n() {
        let (mut p, mut l) = ([0u8; 12], [0u8; 12]);
        for n in 1..=12usize {
            for bits in 0..(1u32 << (2 * n)) {
                for i in 0..n {
                    p[i] = ((bits >> i) & 1) as u8;
                    l[i] = ((bits >> (n + i)) & 1) as u8;
                }
                let (p, l) = (&p[..n], &l[..n]);
                let m = compute_metrics(p, l).unwrap();
                let tp = p.iter().zip(l).filter(|(a, b)| **a == 1 && **b == 1).count();
                let tn = p.iter().zip(l).filter(|(a, b)| **a == 0 && **b == 0).count();
                assert_eq!(m.confusion.tp, tp);
                assert_eq!(m.confusion.tn, tn);
                assert_eq!(m.accuracy, (tp + tn) as f64 / n as f64);
                assert_eq!(m.fscore, fscore(m.precision, m.recall));
            }
        }
    }
}
