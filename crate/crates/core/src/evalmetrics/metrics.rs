use serde::{Deserialize, Serialize};

use crate::evalmetrics::EvalError;
use crate::ingest::{TriageLevel, CLASS_COUNT};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub level: TriageLevel,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
    /// Nothing was predicted as this class, so precision was set to 0.
    pub precision_undefined: bool,
    /// The class never occurs in the truth, so recall was set to 0.
    pub recall_undefined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub count: usize,
    pub accuracy: f64,
    /// `confusion[t][p]` counts rows with true class `t` predicted as `p`.
    pub confusion: [[usize; CLASS_COUNT]; CLASS_COUNT],
    pub per_class: Vec<ClassMetrics>,
    pub macro_f1: f64,
}

fn ratio(num: usize, den: usize) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

pub fn compute_metrics(truth: &[TriageLevel], predicted: &[TriageLevel]) -> Result<Metrics, EvalError> {
    if truth.len() != predicted.len() {
        return Err(EvalError::Length {
            truth: truth.len(),
            predicted: predicted.len(),
        });
    }
    if truth.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut confusion = [[0usize; CLASS_COUNT]; CLASS_COUNT];
    for (t, p) in truth.iter().zip(predicted) {
        confusion[t.code()][p.code()] += 1;
    }
    let hits: usize = (0..CLASS_COUNT).map(|c| confusion[c][c]).sum();
    let per_class: Vec<ClassMetrics> = (0..CLASS_COUNT)
        .map(|c| {
            let support: usize = confusion[c].iter().sum();
            let predicted_as: usize = confusion.iter().map(|row| row[c]).sum();
            let (precision, precision_undefined) = ratio(confusion[c][c], predicted_as);
            let (recall, recall_undefined) = ratio(confusion[c][c], support);
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ClassMetrics {
                level: TriageLevel::from_code(c).expect("class code in range"),
                precision,
                recall,
                f1,
                support,
                precision_undefined,
                recall_undefined,
            }
        })
        .collect();
    let macro_f1 = per_class.iter().map(|m| m.f1).sum::<f64>() / CLASS_COUNT as f64;
    Ok(Metrics {
        count: truth.len(),
        accuracy: hits as f64 / truth.len() as f64,
        confusion,
        per_class,
        macro_f1,
    })
}
