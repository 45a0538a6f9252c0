//! Scoring functions for the heads.

use ndarray::ArrayView2;

use crate::{FppError, Result};

/// Floor applied to probabilities before taking logs in cross-entropy.
pub const PROBABILITY_FLOOR: f64 = 1e-12;

/// A loss value with its per-sample terms.
#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub per_sample: Vec<f64>,
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(FppError::DimensionMismatch {
            expected: a,
            actual: b,
        });
    }
    if a == 0 {
        return Err(FppError::EmptyDataset);
    }
    Ok(())
}

/// Mean squared error.
pub fn mse_loss(predictions: &[f64], targets: &[f64]) -> Result<LossValue> {
    check_lengths(predictions.len(), targets.len())?;
    let per_sample: Vec<f64> = predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t) * (p - t))
        .collect();
    let value = per_sample.iter().sum::<f64>() / per_sample.len() as f64;
    Ok(LossValue { value, per_sample })
}

/// Coefficient of determination `1 − SS_res / SS_tot`; negative when the
/// predictions are worse than the target mean.
pub fn r2_score(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    check_lengths(predictions.len(), targets.len())?;
    if targets.len() < 2 {
        return Err(FppError::invalid("R² needs at least two samples"));
    }
    let mean = targets.iter().sum::<f64>() / targets.len() as f64;
    let ss_tot: f64 = targets.iter().map(|t| (t - mean) * (t - mean)).sum();
    if !(ss_tot > 0.0) {
        return Err(FppError::ZeroVariance);
    }
    let ss_res: f64 = predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Mean negative log-likelihood of the true labels, with probabilities
/// floored at [`PROBABILITY_FLOOR`].
pub fn cross_entropy_loss(probabilities: ArrayView2<f64>, labels: &[usize]) -> Result<LossValue> {
    check_lengths(probabilities.nrows(), labels.len())?;
    let k = probabilities.ncols();
    let per_sample = probabilities
        .rows()
        .into_iter()
        .zip(labels)
        .map(|(p, &l)| {
            if l >= k {
                return Err(FppError::LabelOutOfRange {
                    label: l,
                    class_count: k,
                });
            }
            Ok(-p[l].max(PROBABILITY_FLOOR).ln())
        })
        .collect::<Result<Vec<_>>>()?;
    let value = per_sample.iter().sum::<f64>() / per_sample.len() as f64;
    Ok(LossValue { value, per_sample })
}

/// Fraction of rows whose arg-max probability equals the label.
pub fn accuracy(probabilities: ArrayView2<f64>, labels: &[usize]) -> Result<f64> {
    check_lengths(probabilities.nrows(), labels.len())?;
    let correct = probabilities
        .rows()
        .into_iter()
        .zip(labels)
        .filter(|(p, &l)| argmax(p.iter().copied()) == l)
        .count();
    Ok(correct as f64 / labels.len() as f64)
}

pub(crate) fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}
