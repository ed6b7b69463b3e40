//! Classification metrics: confusion matrix, per-class precision/recall/F1,
//! and the support-weighted F1 headline score.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// C x C counts; rows are true classes, columns predicted classes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    class_count: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(class_count: usize) -> Self {
        ConfusionMatrix {
            class_count,
            counts: vec![0; class_count * class_count],
        }
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, usize)>, class_count: usize) -> Result<Self> {
        let mut cm = ConfusionMatrix::new(class_count);
        for (truth, pred) in pairs {
            cm.add(truth, pred)?;
        }
        Ok(cm)
    }

    pub fn add(&mut self, truth: usize, pred: usize) -> Result<()> {
        if truth >= self.class_count || pred >= self.class_count {
            return Err(Error::Usage(format!(
                "confusion matrix index ({truth}, {pred}) out of range for {} classes",
                self.class_count
            )));
        }
        self.counts[truth * self.class_count + pred] += 1;
        Ok(())
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn at(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.class_count + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Row sum: number of evaluated flows whose true class is `c`.
    pub fn support(&self, c: usize) -> u64 {
        (0..self.class_count).map(|p| self.at(c, p)).sum()
    }

    pub fn true_positives(&self, c: usize) -> u64 {
        self.at(c, c)
    }

    pub fn false_positives(&self, c: usize) -> u64 {
        (0..self.class_count)
            .filter(|&t| t != c)
            .map(|t| self.at(t, c))
            .sum()
    }

    pub fn false_negatives(&self, c: usize) -> u64 {
        (0..self.class_count)
            .filter(|&p| p != c)
            .map(|p| self.at(c, p))
            .sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

/// Per-class scores plus the support-weighted F1. Classes absent from the
/// ground truth report support 0 and carry no weight in the average.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub per_class: Vec<ClassScore>,
    pub weighted_f1: f64,
    pub loss: Option<f64>,
}

/// The 0/0 cases are defined as 0 throughout.
pub fn metrics_from_confusion(cm: &ConfusionMatrix) -> Metrics {
    let ratio = |num: f64, den: f64| if den > 0.0 { num / den } else { 0.0 };
    let per_class: Vec<ClassScore> = (0..cm.class_count())
        .map(|c| {
            let tp = cm.true_positives(c) as f64;
            let fp = cm.false_positives(c) as f64;
            let fn_ = cm.false_negatives(c) as f64;
            let precision = ratio(tp, tp + fp);
            let recall = ratio(tp, tp + fn_);
            let f1 = ratio(2.0 * precision * recall, precision + recall);
            ClassScore {
                precision,
                recall,
                f1,
                support: cm.support(c),
            }
        })
        .collect();
    let total_support: u64 = per_class.iter().map(|s| s.support).sum();
    let weighted_f1 = if total_support == 0 {
        0.0
    } else {
        per_class
            .iter()
            .map(|s| s.support as f64 * s.f1)
            .sum::<f64>()
            / total_support as f64
    };
    Metrics {
        per_class,
        weighted_f1,
        loss: None,
    }
}
