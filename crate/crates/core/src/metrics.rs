//! Binary classification metrics. Class 1 (fraud) is the positive class.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("{probs} scores but {labels} labels")]
    LengthMismatch { probs: usize, labels: usize },
    #[error("no samples to evaluate")]
    EmptyInput,
    #[error("ROC-AUC needs both classes present")]
    SingleClassInput,
}

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// Counts with the roles of the two classes exchanged.
    pub fn swapped(&self) -> Self {
        ConfusionCounts {
            tp: self.tn,
            fp: self.fn_,
            tn: self.tp,
            fn_: self.fp,
        }
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.tp + self.tn, self.total())
    }

    pub fn positive(&self) -> ClassMetrics {
        ClassMetrics::from_counts(self.tp, self.fp, self.fn_)
    }

    pub fn negative(&self) -> ClassMetrics {
        ClassMetrics::from_counts(self.tn, self.fn_, self.fp)
    }
}

/// x / y with 0/0 := 0.
fn ratio(x: u64, y: u64) -> f64 {
    if y == 0 {
        0.0
    } else {
        x as f64 / y as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

impl ClassMetrics {
    fn from_counts(tp: u64, fp: u64, fn_: u64) -> Self {
        ClassMetrics {
            precision: ratio(tp, tp + fp),
            recall: ratio(tp, tp + fn_),
            // 2TP / (2TP + FP + FN) equals the harmonic mean and is 0 when undefined.
            f1: ratio(2 * tp, 2 * tp + fp + fn_),
            support: tp + fn_,
        }
    }
}

/// Predicts positive iff `prob >= threshold`.
pub fn confusion(probs: &[f64], labels: &[u8], threshold: f64) -> Result<ConfusionCounts, MetricsError> {
    if probs.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            probs: probs.len(),
            labels: labels.len(),
        });
    }
    let mut c = ConfusionCounts::default();
    for (&p, &y) in probs.iter().zip(labels) {
        match (p >= threshold, y == 1) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// Mean of the fraud and non-fraud F1 scores.
pub fn macro_f1(counts: &ConfusionCounts) -> Result<f64, MetricsError> {
    if counts.total() == 0 {
        return Err(MetricsError::EmptyInput);
    }
    Ok((counts.positive().f1 + counts.negative().f1) / 2.0)
}

/// Mann–Whitney AUC with midranks for tied scores.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64, MetricsError> {
    if scores.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            probs: scores.len(),
            labels: labels.len(),
        });
    }
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricsError::SingleClassInput);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Ranks are 1-based; a tie group spanning positions i..j gets (i + 1 + j) / 2.
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + 1 + j) as f64 / 2.0;
        let pos_in_group = order[i..j].iter().filter(|&&k| labels[k] == 1).count();
        rank_sum_pos += midrank * pos_in_group as f64;
        i = j;
    }
    let (np, nn) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub threshold: f64,
    pub confusion: ConfusionCounts,
    pub fraud: ClassMetrics,
    pub non_fraud: ClassMetrics,
    pub accuracy: f64,
    pub macro_f1: f64,
    /// `None` when only one class is present.
    pub roc_auc: Option<f64>,
}

impl EvalReport {
    pub fn compute(probs: &[f64], labels: &[u8], threshold: f64) -> Result<Self, MetricsError> {
        let confusion = confusion(probs, labels, threshold)?;
        let macro_f1 = macro_f1(&confusion)?;
        let roc_auc = match roc_auc(probs, labels) {
            Ok(v) => Some(v),
            Err(MetricsError::SingleClassInput) => None,
            Err(e) => return Err(e),
        };
        Ok(EvalReport {
            threshold,
            confusion,
            fraud: confusion.positive(),
            non_fraud: confusion.negative(),
            accuracy: confusion.accuracy(),
            macro_f1,
            roc_auc,
        })
    }
}
