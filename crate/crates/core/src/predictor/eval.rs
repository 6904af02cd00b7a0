use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::log_model::OutcomeLabel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecisionReport {
    /// Correct predictions over all predictions.
    pub overall: f64,
    /// Per predicted class: correct in class over predicted in class.
    pub per_class: BTreeMap<String, f64>,
    /// Unweighted mean of `per_class`.
    pub macro_precision: f64,
    pub total: usize,
    pub correct: usize,
}

pub fn precision(predictions: &[OutcomeLabel], truths: &[OutcomeLabel]) -> Result<PrecisionReport, ModelError> {
    if predictions.len() != truths.len() {
        return Err(ModelError::LengthMismatch(predictions.len(), truths.len()));
    }
    let mut predicted: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    let mut correct = 0;
    for (p, t) in predictions.iter().zip(truths) {
        let entry = predicted.entry(p.as_str()).or_insert((0, 0));
        entry.1 += 1;
        if p == t {
            entry.0 += 1;
            correct += 1;
        }
    }
    let per_class: BTreeMap<String, f64> = predicted
        .into_iter()
        .map(|(k, (hit, n))| (k.to_string(), hit as f64 / n as f64))
        .collect();
    let total = predictions.len();
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let macro_precision = if per_class.is_empty() {
        0.0
    } else {
        per_class.values().sum::<f64>() / per_class.len() as f64
    };
    Ok(PrecisionReport {
        overall: ratio(correct, total),
        per_class,
        macro_precision,
        total,
        correct,
    })
}
