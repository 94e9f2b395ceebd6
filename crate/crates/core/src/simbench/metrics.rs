use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Prediction error and selection quality of one fitted model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mse: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Nothing was selected; precision was recorded as 0.
    pub empty_selection: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub replicate: usize,
    pub method: String,
    pub mse: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl MetricsRecord {
    pub fn new(replicate: usize, method: impl Into<String>, m: &Metrics) -> Self {
        Self {
            replicate,
            method: method.into(),
            mse: m.mse,
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
        }
    }
}

/// MSE between true and fitted probabilities, and precision / recall / F1
/// of the selected genes against the true nonzero coefficients.
pub fn compute_metrics(beta_true: &[f64], selected: &[bool], q_true: &[f64], q_hat: &[f64]) -> Result<Metrics> {
    if beta_true.len() != selected.len() {
        return Err(Error::DimensionMismatch {
            expected: beta_true.len(),
            actual: selected.len(),
        });
    }
    if q_true.len() != q_hat.len() {
        return Err(Error::DimensionMismatch {
            expected: q_true.len(),
            actual: q_hat.len(),
        });
    }
    if q_true.is_empty() {
        return Err(Error::InvalidExperiment("no cells".into()));
    }
    let mse = q_true.iter().zip(q_hat).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / q_true.len() as f64;

    let n_true = beta_true.iter().filter(|&&b| b != 0.0).count();
    if n_true == 0 {
        return Err(Error::InvalidExperiment(
            "true model has no nonzero coefficients".into(),
        ));
    }
    let n_selected = selected.iter().filter(|&&s| s).count();
    let hits = beta_true.iter().zip(selected).filter(|(&b, &s)| b != 0.0 && s).count();
    let empty_selection = n_selected == 0;
    let precision = if empty_selection {
        0.0
    } else {
        hits as f64 / n_selected as f64
    };
    let recall = hits as f64 / n_true as f64;
    let f1 = if precision > 0.0 && recall > 0.0 {
        2.0 / (1.0 / precision + 1.0 / recall)
    } else {
        0.0
    };
    Ok(Metrics {
        mse,
        precision,
        recall,
        f1,
        empty_selection,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flags(p: usize, on: &[usize]) -> Vec<bool> {
        (0..p).map(|j| on.contains(&j)).collect()
    }

    #[test]
    fn hand_counted_example() {
        // true {1,2,3,4}, selected {3,4,5}
        let beta = [0.0, 1.0, 1.0, 1.0, 1.0, 0.0];
        let m = compute_metrics(&beta, &flags(6, &[3, 4, 5]), &[0.5], &[0.5]).unwrap();
        assert!((m.precision - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.recall - 0.5).abs() < 1e-15);
        assert!((m.f1 - 4.0 / 7.0).abs() < 1e-15);
        assert_eq!(m.mse, 0.0);
    }

    #[test]
    fn perfect_selection() {
        let beta = [0.0, 2.0, -1.0];
        let m = compute_metrics(&beta, &[false, true, true], &[0.2, 0.7], &[0.1, 0.9]).unwrap();
        assert_eq!((m.precision, m.recall, m.f1), (1.0, 1.0, 1.0));
        assert!((m.mse - (0.01 + 0.04) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn empty_selection_and_empty_truth() {
        let m = compute_metrics(&[1.0, 0.0], &[false, false], &[0.5], &[0.4]).unwrap();
        assert!(m.empty_selection);
        assert_eq!((m.precision, m.f1), (0.0, 0.0));
        assert!(matches!(
            compute_metrics(&[0.0, 0.0], &[true, false], &[0.5], &[0.4]),
            Err(Error::InvalidExperiment(_))
        ));
    }
}
