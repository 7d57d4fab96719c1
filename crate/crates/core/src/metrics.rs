//! Multi-class classification metrics used as the TOPSIS criteria.

use serde::{Deserialize, Serialize};

use crate::dataset::LabeledSet;
use crate::error::{Error, Result};
use crate::model::{self, ModelParams};

/// Row = true class, column = predicted class.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn zeros(classes: usize) -> Result<Self> {
        if classes < 2 {
            return Err(Error::InvalidMatrix(format!(
                "confusion matrix needs at least 2 classes, got {classes}"
            )));
        }
        Ok(Self {
            classes,
            counts: vec![0; classes * classes],
        })
    }

    /// Build from explicit rows (`rows[true][pred]`).
    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let mut cm = Self::zeros(rows.len())?;
        for (t, row) in rows.iter().enumerate() {
            if row.len() != cm.classes {
                return Err(Error::LengthMismatch {
                    what: "confusion matrix row",
                    left: row.len(),
                    right: cm.classes,
                });
            }
            cm.counts[t * cm.classes..(t + 1) * cm.classes].copy_from_slice(row);
        }
        Ok(cm)
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.classes + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes).map(|c| self.get(c, c)).sum()
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.classes).map(<[u64]>::to_vec).collect()
    }

    fn record(&mut self, truth: usize, predicted: usize) {
        self.counts[truth * self.classes + predicted] += 1;
    }

    /// Row-major CSV block with a header row of predicted-class indices.
    pub fn to_csv_block(&self) -> String {
        let mut out = String::new();
        let header: Vec<String> = (0..self.classes).map(|c| c.to_string()).collect();
        out.push_str(&header.join(","));
        out.push('\n');
        for row in self.counts.chunks(self.classes) {
            let cells: Vec<String> = row.iter().map(u64::to_string).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// Accuracy plus macro-averaged precision, recall and F1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricVector {
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
}

impl MetricVector {
    /// Criteria row in decision-matrix column order.
    pub fn as_array(&self) -> [f64; 4] {
        [
            self.accuracy,
            self.macro_precision,
            self.macro_recall,
            self.macro_f1,
        ]
    }
}

pub fn confusion_matrix(
    predictions: &[usize],
    labels: &[usize],
    classes: usize,
) -> Result<ConfusionMatrix> {
    if predictions.len() != labels.len() {
        return Err(Error::LengthMismatch {
            what: "predictions vs labels",
            left: predictions.len(),
            right: labels.len(),
        });
    }
    let mut cm = ConfusionMatrix::zeros(classes)?;
    for (&p, &t) in predictions.iter().zip(labels) {
        for index in [p, t] {
            if index >= classes {
                return Err(Error::ClassOutOfRange { index, classes });
            }
        }
        cm.record(t, p);
    }
    Ok(cm)
}

fn ratio_or_zero(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// Macro metrics; a class whose precision or recall is undefined contributes 0.
pub fn macro_metrics(cm: &ConfusionMatrix) -> Result<MetricVector> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::Empty("confusion matrix"));
    }
    let k = cm.classes();
    let (mut p_sum, mut r_sum, mut f_sum) = (0.0, 0.0, 0.0);
    for c in 0..k {
        let tp = cm.get(c, c) as f64;
        let predicted: u64 = (0..k).map(|t| cm.get(t, c)).sum();
        let actual: u64 = (0..k).map(|p| cm.get(c, p)).sum();
        let precision = ratio_or_zero(tp, predicted as f64);
        let recall = ratio_or_zero(tp, actual as f64);
        p_sum += precision;
        r_sum += recall;
        f_sum += ratio_or_zero(2.0 * precision * recall, precision + recall);
    }
    let k = k as f64;
    Ok(MetricVector {
        accuracy: cm.trace() as f64 / total as f64,
        macro_precision: p_sum / k,
        macro_recall: r_sum / k,
        macro_f1: f_sum / k,
    })
}

/// Forward pass, argmax, confusion matrix.
pub fn evaluate_confusion(params: &ModelParams, data: &LabeledSet) -> Result<ConfusionMatrix> {
    let predictions = model::predict(params, &data.features)?;
    confusion_matrix(&predictions, &data.labels, params.layout().output_dim)
}

pub fn evaluate_model(params: &ModelParams, data: &LabeledSet) -> Result<MetricVector> {
    macro_metrics(&evaluate_confusion(params, data)?)
}
