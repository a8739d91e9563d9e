//! Confusion matrices and the accuracy / precision / recall / F1 family.
//!
//! Zero denominators produce a rate of 0 and a warning string rather than NaN.

use serde::{Deserialize, Serialize};

use crate::emotion::{Emotion, NUM_EMOTIONS};
use crate::error::{Error, Result};

/// 7×7 counts, rows = true class, columns = predicted class.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: [[u64; NUM_EMOTIONS]; NUM_EMOTIONS],
}

impl ConfusionMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_counts(counts: [[u64; NUM_EMOTIONS]; NUM_EMOTIONS]) -> Self {
        ConfusionMatrix { counts }
    }

    pub fn record(&mut self, truth: Emotion, predicted: Emotion) {
        self.counts[truth.index()][predicted.index()] += 1;
    }

    pub fn get(&self, truth: Emotion, predicted: Emotion) -> u64 {
        self.counts[truth.index()][predicted.index()]
    }

    pub fn counts(&self) -> &[[u64; NUM_EMOTIONS]; NUM_EMOTIONS] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..NUM_EMOTIONS).map(|i| self.counts[i][i]).sum()
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for (row, other_row) in self.counts.iter_mut().zip(&other.counts) {
            for (c, o) in row.iter_mut().zip(other_row) {
                *c += o;
            }
        }
    }

    /// One-vs-rest counts with `positive` as the positive class.
    pub fn collapse(&self, positive: Emotion) -> BinaryCounts {
        let p = positive.index();
        let mut counts = BinaryCounts::default();
        for (t, row) in self.counts.iter().enumerate() {
            for (q, &n) in row.iter().enumerate() {
                match (t == p, q == p) {
                    (true, true) => counts.tp += n,
                    (false, true) => counts.fp += n,
                    (true, false) => counts.fn_ += n,
                    (false, false) => counts.tn += n,
                }
            }
        }
        counts
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl BinaryCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryMetrics {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub positive: Option<Emotion>,
    #[serde(flatten)]
    pub counts: BinaryCounts,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub emotion: Emotion,
    pub support: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub samples: u64,
    pub accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub binary: Option<BinaryMetrics>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

fn ratio(num: u64, den: u64, what: &str, warnings: &mut Vec<String>) -> f64 {
    if den == 0 {
        warnings.push(format!("{what}: zero denominator, reported as 0"));
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Accuracy (TP+TN)/total, precision TP/(TP+FP), recall TP/(TP+FN) and
/// F1 = 2TP/(2TP+FP+FN).
pub fn binary_metrics(counts: &BinaryCounts, warnings: &mut Vec<String>) -> Result<BinaryMetrics> {
    let total = counts.total();
    if total == 0 {
        return Err(Error::Data("binary counts are all zero".into()));
    }
    let BinaryCounts { tp, fp, tn, fn_ } = *counts;
    Ok(BinaryMetrics {
        positive: None,
        counts: *counts,
        accuracy: (tp + tn) as f64 / total as f64,
        precision: ratio(tp, tp + fp, "binary precision", warnings),
        recall: ratio(tp, tp + fn_, "binary recall", warnings),
        f1: ratio(2 * tp, 2 * tp + fp + fn_, "binary F1", warnings),
    })
}

/// Seven-class report, plus a one-vs-rest aggregate when `positive` is given.
pub fn compute_metrics(cm: &ConfusionMatrix, positive: Option<Emotion>) -> Result<MetricsReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::Data("confusion matrix is empty".into()));
    }
    let mut warnings = Vec::new();
    let counts = cm.counts();
    let per_class: Vec<ClassMetrics> = Emotion::ALL
        .iter()
        .map(|&e| {
            let i = e.index();
            let tp = counts[i][i];
            let support: u64 = counts[i].iter().sum();
            let predicted: u64 = counts.iter().map(|row| row[i]).sum();
            let precision = ratio(tp, predicted, &format!("{e} precision"), &mut warnings);
            let recall = ratio(tp, support, &format!("{e} recall"), &mut warnings);
            ClassMetrics {
                emotion: e,
                support,
                precision,
                recall,
                f1: f1_score(precision, recall),
            }
        })
        .collect();
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / NUM_EMOTIONS as f64;
    let binary = positive
        .map(|p| {
            binary_metrics(&cm.collapse(p), &mut warnings).map(|mut b| {
                b.positive = Some(p);
                b
            })
        })
        .transpose()?;
    Ok(MetricsReport {
        samples: total,
        accuracy: cm.trace() as f64 / total as f64,
        macro_precision: mean(|c| c.precision),
        macro_recall: mean(|c| c.recall),
        macro_f1: mean(|c| c.f1),
        per_class,
        binary,
        warnings,
    })
}
