use super::EvalError;
use crate::classify::Classification;
use crate::decimal::Centi;

/// Number of samples whose truth is among the first `k` labels.
pub fn topk_correct(predictions: &[Classification], truths: &[String], k: usize) -> usize {
    predictions
        .iter()
        .zip(truths)
        .filter(|(p, t)| p.top_labels(k).any(|l| l == t.as_str()))
        .count()
}

/// Percentage of samples whose truth label is among the first `k` labels
/// of its classification, rounded half up to two decimals.
pub fn topk_accuracy(predictions: &[Classification], truths: &[String], k: usize) -> Result<Centi, EvalError> {
    if predictions.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    if predictions.len() != truths.len() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            truths: truths.len(),
        });
    }
    if k == 0 {
        return Err(EvalError::InvalidK);
    }
    let correct = topk_correct(predictions, truths, k);
    Ok(Centi::percent(correct as u64, predictions.len() as u64))
}
