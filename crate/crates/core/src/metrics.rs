//! Binary classification metrics with `Private` as the positive class.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::feature_model::PrivacyLabel;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("prediction length {predicted} does not match truth length {truth}")]
    LengthMismatch { truth: usize, predicted: usize },
    #[error("no samples to evaluate")]
    EmptyInput,
    #[error("{0} is undefined: a class is absent from the ground truth")]
    UndefinedMetric(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        ConfusionCounts { tp, fp, tn, fn_ }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn positives(&self) -> u64 {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> u64 {
        self.tn + self.fp
    }
}

pub fn confusion(
    y_true: &[PrivacyLabel],
    y_pred: &[PrivacyLabel],
) -> Result<ConfusionCounts, MetricsError> {
    if y_true.len() != y_pred.len() {
        return Err(MetricsError::LengthMismatch {
            truth: y_true.len(),
            predicted: y_pred.len(),
        });
    }
    if y_true.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut c = ConfusionCounts::default();
    for (t, p) in y_true.iter().zip(y_pred) {
        match (t.is_private(), p.is_private()) {
            (true, true) => c.tp += 1,
            (true, false) => c.fn_ += 1,
            (false, true) => c.fp += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

/// Mean of the per-class recalls.
pub fn balanced_accuracy(c: &ConfusionCounts) -> Result<f64, MetricsError> {
    if c.positives() == 0 || c.negatives() == 0 {
        return Err(MetricsError::UndefinedMetric("balanced accuracy"));
    }
    let tpr = c.tp as f64 / c.positives() as f64;
    let tnr = c.tn as f64 / c.negatives() as f64;
    Ok((tpr + tnr) / 2.0)
}

/// `2tp / (2tp + fp + fn)`, or 0.0 when the denominator vanishes.
pub fn f1(c: &ConfusionCounts) -> f64 {
    let denom = 2 * c.tp + c.fp + c.fn_;
    if denom == 0 {
        log::warn!("F1 denominator is zero (no positives predicted or present); reporting 0.0");
        return 0.0;
    }
    (2 * c.tp) as f64 / denom as f64
}

pub fn unweighted_accuracy(c: &ConfusionCounts) -> Result<f64, MetricsError> {
    if c.total() == 0 {
        return Err(MetricsError::EmptyInput);
    }
    Ok((c.tp + c.tn) as f64 / c.total() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// `None` when one class is absent from the evaluated truth.
    pub balanced_accuracy: Option<f64>,
    pub f1: f64,
    pub unweighted_accuracy: f64,
    pub counts: ConfusionCounts,
    pub n: u64,
}

impl MetricsReport {
    pub fn from_counts(counts: ConfusionCounts) -> Result<Self, MetricsError> {
        Ok(MetricsReport {
            balanced_accuracy: balanced_accuracy(&counts).ok(),
            f1: f1(&counts),
            unweighted_accuracy: unweighted_accuracy(&counts)?,
            counts,
            n: counts.total(),
        })
    }

    pub fn evaluate(y_true: &[PrivacyLabel], y_pred: &[PrivacyLabel]) -> Result<Self, MetricsError> {
        Self::from_counts(confusion(y_true, y_pred)?)
    }

    pub const TABLE_HEADER: &'static str =
        "      BA       F1      UBA      n     tp     fp     tn     fn";

    /// Fixed-width text row matching [`Self::TABLE_HEADER`]; metrics in percent.
    pub fn table_row(&self) -> String {
        let ba = self
            .balanced_accuracy
            .map_or_else(|| "     n/a".to_string(), |v| format!("{:>8.2}", 100.0 * v));
        format!(
            "{ba} {:>8.2} {:>8.2} {:>6} {:>6} {:>6} {:>6} {:>6}",
            100.0 * self.f1,
            100.0 * self.unweighted_accuracy,
            self.n,
            self.counts.tp,
            self.counts.fp,
            self.counts.tn,
            self.counts.fn_
        )
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", Self::TABLE_HEADER)?;
        write!(f, "{}", self.table_row())
    }
}
