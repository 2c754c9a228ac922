//! Confusion matrix and the derived evaluation metrics: per-class precision,
//! recall, F1, specificity, and the support-weighted F1.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// K x K counts; rows are true classes, columns are predictions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(k: usize) -> Self {
        ConfusionMatrix {
            counts: vec![vec![0; k]; k],
        }
    }

    pub fn from_predictions(preds: &[usize], labels: &[usize], k: usize) -> Result<Self> {
        if preds.len() != labels.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} predictions vs {} labels",
                preds.len(),
                labels.len()
            )));
        }
        let mut cm = ConfusionMatrix::new(k);
        for (&p, &l) in preds.iter().zip(labels) {
            if p >= k || l >= k {
                return Err(Error::InvalidInput(format!("class index out of range: pred {p}, label {l}")));
            }
            cm.counts[l][p] += 1;
        }
        Ok(cm)
    }

    pub fn k(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// True positives for class k.
    pub fn tp(&self, k: usize) -> u64 {
        self.counts[k][k]
    }

    /// False negatives: class-k rows predicted elsewhere.
    pub fn fn_(&self, k: usize) -> u64 {
        self.counts[k].iter().sum::<u64>() - self.tp(k)
    }

    /// False positives: other rows predicted as k.
    pub fn fp(&self, k: usize) -> u64 {
        self.counts.iter().map(|row| row[k]).sum::<u64>() - self.tp(k)
    }

    /// True negatives, one-vs-rest.
    pub fn tn(&self, k: usize) -> u64 {
        self.total() - self.tp(k) - self.fn_(k) - self.fp(k)
    }

    /// Row sum: how many evaluated examples truly belong to class k.
    pub fn support(&self, k: usize) -> u64 {
        self.counts[k].iter().sum()
    }
}

/// TN / (TN + FP); defined as 1.0 when the class has no negatives.
pub fn specificity(cm: &ConfusionMatrix, k: usize) -> f64 {
    let tn = cm.tn(k);
    let fp = cm.fp(k);
    if tn + fp == 0 {
        1.0
    } else {
        tn as f64 / (tn + fp) as f64
    }
}

pub fn precision(cm: &ConfusionMatrix, k: usize) -> f64 {
    let tp = cm.tp(k);
    let fp = cm.fp(k);
    if tp + fp == 0 {
        0.0
    } else {
        tp as f64 / (tp + fp) as f64
    }
}

pub fn recall(cm: &ConfusionMatrix, k: usize) -> f64 {
    let tp = cm.tp(k);
    let fn_ = cm.fn_(k);
    if tp + fn_ == 0 {
        0.0
    } else {
        tp as f64 / (tp + fn_) as f64
    }
}

/// 2TP / (2TP + FN + FP); zero when the denominator vanishes.
pub fn f1(cm: &ConfusionMatrix, k: usize) -> f64 {
    let tp = cm.tp(k);
    let denom = 2 * tp + cm.fn_(k) + cm.fp(k);
    if denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

/// Support-weighted mean of the per-class F1 scores.
pub fn weighted_f1(cm: &ConfusionMatrix) -> f64 {
    let total = cm.total();
    if total == 0 {
        return 0.0;
    }
    (0..cm.k())
        .map(|k| cm.support(k) as f64 / total as f64 * f1(cm, k))
        .sum()
}

pub fn accuracy(cm: &ConfusionMatrix) -> f64 {
    let total = cm.total();
    if total == 0 {
        return 0.0;
    }
    (0..cm.k()).map(|k| cm.tp(k)).sum::<u64>() as f64 / total as f64
}

/// Everything a run reports for one evaluation set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub confusion: ConfusionMatrix,
    pub per_class: Vec<ClassMetrics>,
    pub weighted_f1: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: String,
    pub support: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub specificity: f64,
}

impl MetricsReport {
    pub fn from_confusion(cm: ConfusionMatrix, class_names: &[&str]) -> Self {
        assert_eq!(class_names.len(), cm.k());
        let per_class = class_names
            .iter()
            .enumerate()
            .map(|(k, name)| ClassMetrics {
                class: name.to_string(),
                support: cm.support(k),
                precision: precision(&cm, k),
                recall: recall(&cm, k),
                f1: f1(&cm, k),
                specificity: specificity(&cm, k),
            })
            .collect();
        MetricsReport {
            weighted_f1: weighted_f1(&cm),
            accuracy: accuracy(&cm),
            per_class,
            confusion: cm,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_correct_is_diagonal() {
        let cm = ConfusionMatrix::from_predictions(&[0, 1, 2, 1], &[0, 1, 2, 1], 3).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    assert_eq!(cm.counts[i][j], 0);
                }
            }
        }
        assert_eq!(cm.total(), 4);
        assert_eq!(weighted_f1(&cm), 1.0);
    }

    #[test]
    fn misclassification_lands_in_the_right_cell() {
        let cm = ConfusionMatrix::from_predictions(&[0, 1, 1], &[0, 1, 2], 3).unwrap();
        assert_eq!(cm.counts[2][1], 1);
        assert_eq!(cm.tp(0), 1);
        assert_eq!(cm.tp(1), 1);
        assert_eq!(cm.tp(2), 0);
    }

    #[test]
    fn empty_input_gives_zero_matrix() {
        let cm = ConfusionMatrix::from_predictions(&[], &[], 3).unwrap();
        assert_eq!(cm.total(), 0);
        assert_eq!(weighted_f1(&cm), 0.0);
    }

    #[test]
    fn specificity_arithmetic() {
        // class 0 one-vs-rest with TN = 90, FP = 10
        let mut cm = ConfusionMatrix::new(2);
        cm.counts[0][0] = 40; // TP
        cm.counts[1][0] = 10; // FP
        cm.counts[1][1] = 90; // TN
        assert!((specificity(&cm, 0) - 0.9).abs() < 1e-12);
        // zero FP with TN > 0
        cm.counts[1][0] = 0;
        assert_eq!(specificity(&cm, 0), 1.0);
    }

    #[test]
    fn f1_arithmetic() {
        // TP=50, FN=0, FP=0 -> 1.0
        let mut cm = ConfusionMatrix::new(2);
        cm.counts[0][0] = 50;
        assert_eq!(f1(&cm, 0), 1.0);
        // TP=8, FN=2, FP=2 -> 0.8
        let mut cm = ConfusionMatrix::new(2);
        cm.counts[0][0] = 8;
        cm.counts[0][1] = 2;
        cm.counts[1][0] = 2;
        assert!((f1(&cm, 0) - 0.8).abs() < 1e-12);
    }

    #[test]
    fn totals_and_supports_are_consistent() {
        let preds = [0, 1, 2, 0, 1, 2, 0];
        let labels = [0, 1, 1, 2, 1, 2, 0];
        let cm = ConfusionMatrix::from_predictions(&preds, &labels, 3).unwrap();
        assert_eq!(cm.total() as usize, preds.len());
        for k in 0..3 {
            assert_eq!(cm.tp(k) + cm.fn_(k), cm.support(k));
        }
    }

    #[test]
    fn metrics_stay_in_unit_interval() {
        let preds = [0, 1, 2, 0, 1, 2, 0, 2, 2];
        let labels = [0, 1, 1, 2, 1, 2, 0, 0, 1];
        let cm = ConfusionMatrix::from_predictions(&preds, &labels, 3).unwrap();
        for k in 0..3 {
            for v in [precision(&cm, k), recall(&cm, k), f1(&cm, k), specificity(&cm, k)] {
                assert!((0.0..=1.0).contains(&v));
            }
        }
        assert!((0.0..=1.0).contains(&weighted_f1(&cm)));
        assert!((0.0..=1.0).contains(&accuracy(&cm)));
    }

    #[test]
    fn report_serializes_to_json() {
        let cm = ConfusionMatrix::from_predictions(&[0, 1, 1], &[0, 1, 2], 3).unwrap();
        let report = MetricsReport::from_confusion(cm, &["N", "A", "O"]);
        let json = serde_json::to_string(&report).unwrap();
        assert!(json.contains("weighted_f1"));
        assert!(json.contains("specificity"));
        let back: MetricsReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back.confusion, report.confusion);
    }
}
