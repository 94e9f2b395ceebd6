//! Small numeric kernels shared across modules.

use crate::error::{Error, Result};

/// Standard deviations below this are treated as zero.
pub const CONSTANT_SD: f64 = 1e-12;

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation (denominator `n - 1`) around a known mean.
pub fn sample_sd(v: &[f64], mean: f64) -> f64 {
    let ss: f64 = v.iter().map(|x| (x - mean) * (x - mean)).sum();
    (ss / (v.len() as f64 - 1.0)).sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Pearson product-moment correlation, clamped to `[-1, 1]`.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::InvalidArgument(
            "correlation needs at least two observations".into(),
        ));
    }
    let (ma, mb) = (mean(a), mean(b));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    let scale = (a.len() as f64 - 1.0).sqrt();
    if saa.sqrt() / scale < CONSTANT_SD || sbb.sqrt() / scale < CONSTANT_SD {
        return Err(Error::UndefinedCorrelation("one of the vectors is constant".into()));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Centers `v` and scales it to unit Euclidean norm. Returns `None` for a
/// constant vector. The dot product of two such vectors is their correlation.
pub(crate) fn unit_centered(v: &[f64]) -> Option<Vec<f64>> {
    let m = mean(v);
    let mut out: Vec<f64> = v.iter().map(|x| x - m).collect();
    let norm = out.iter().map(|x| x * x).sum::<f64>().sqrt();
    if v.len() < 2 || norm / ((v.len() - 1) as f64).sqrt() < CONSTANT_SD {
        return None;
    }
    out.iter_mut().for_each(|x| *x /= norm);
    Some(out)
}

pub fn logistic(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Median of a slice; NaN for an empty input.
pub fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let m = s.len() / 2;
    if s.len() % 2 == 1 {
        s[m]
    } else {
        0.5 * (s[m - 1] + s[m])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn self_and_negated_correlation() {
        let x = [0.3, 1.7, -2.0, 4.1, 0.0];
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert_eq!(pearson(&x, &x).unwrap(), 1.0);
        assert_eq!(pearson(&x, &neg).unwrap(), -1.0);
    }

    #[test]
    fn matches_direct_formula() {
        // cov((1,2,3),(1,2,4)) = 1.5, sd = 1 and sqrt(7/3)
        let r = pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]).unwrap();
        let expected = 1.5 / (1.0 * (7.0f64 / 3.0).sqrt());
        assert!((r - expected).abs() < 1e-15);
    }

    #[test]
    fn constant_input_is_an_error() {
        assert!(matches!(
            pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(Error::UndefinedCorrelation(_))
        ));
    }

    #[test]
    fn logistic_is_stable_at_extremes() {
        assert_eq!(logistic(0.0), 0.5);
        assert!(logistic(800.0) <= 1.0);
        assert!(logistic(-800.0) >= 0.0);
        assert!((logit(logistic(1.3)) - 1.3).abs() < 1e-12);
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
