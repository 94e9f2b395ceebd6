use log::warn;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Largest number of nonzero differences handled by the exact null
/// distribution; beyond it a normal approximation is used.
pub const EXACT_LIMIT: usize = 25;
const MIN_NONZERO: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    /// Sum of ranks of the positive differences.
    pub statistic: f64,
    pub n_nonzero: usize,
    pub p_value: f64,
    pub exact: bool,
}

/// Mid-ranks of `|d|`, doubled so that they are integers.
fn doubled_ranks(abs: &[f64]) -> Vec<u64> {
    let mut order: Vec<usize> = (0..abs.len()).collect();
    order.sort_by(|&a, &b| abs[a].total_cmp(&abs[b]));
    let mut ranks = vec![0u64; abs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && abs[order[j + 1]] == abs[order[i]] {
            j += 1;
        }
        for &k in &order[i..=j] {
            ranks[k] = (i + j + 2) as u64;
        }
        i = j + 1;
    }
    ranks
}

/// Two-sided exact p-value of the signed-rank statistic for nonzero
/// differences `d`: the null distribution of the (doubled) positive rank sum
/// is counted over all `2ⁿ` sign assignments of the observed mid-ranks.
pub fn exact_p_value(d: &[f64]) -> f64 {
    let abs: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    let ranks = doubled_ranks(&abs);
    let observed: u64 = ranks.iter().zip(d).filter(|(_, &v)| v > 0.0).map(|(&r, _)| r).sum();
    let total: u64 = ranks.iter().sum();
    let mut counts = vec![0u64; total as usize + 1];
    counts[0] = 1;
    let mut reach = 0usize;
    for &r in &ranks {
        let r = r as usize;
        for s in (0..=reach).rev() {
            if counts[s] > 0 {
                counts[s + r] += counts[s];
            }
        }
        reach += r;
    }
    let denom = 2f64.powi(d.len() as i32);
    let obs = observed as usize;
    let lower: u64 = counts[..=obs].iter().sum();
    let upper: u64 = counts[obs..].iter().sum();
    (2.0 * lower.min(upper) as f64 / denom).min(1.0)
}

fn normal_p_value(d: &[f64]) -> f64 {
    let abs: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    let ranks = doubled_ranks(&abs);
    let w: f64 = ranks
        .iter()
        .zip(d)
        .filter(|(_, &v)| v > 0.0)
        .map(|(&r, _)| r as f64 / 2.0)
        .sum();
    let n = d.len() as f64;
    let mean = n * (n + 1.0) / 4.0;
    // tie correction: Σ (t³ − t) / 48 over groups of equal |d|
    let mut sorted = abs.clone();
    sorted.sort_by(f64::total_cmp);
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
    if var <= 0.0 {
        return 1.0;
    }
    let diff = w - mean;
    let z = (diff - 0.5 * diff.signum()).abs() / var.sqrt();
    let normal = Normal::standard();
    (2.0 * normal.sf(z)).min(1.0)
}

/// Paired Wilcoxon signed-rank test on differences. Zeros are dropped; an
/// exact distribution is used for up to [`EXACT_LIMIT`] nonzero
/// differences, otherwise a normal approximation with tie and continuity
/// corrections.
pub fn wilcoxon_signed_rank(differences: &[f64]) -> Result<WilcoxonResult> {
    if differences.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("differences must be finite".into()));
    }
    let d: Vec<f64> = differences.iter().copied().filter(|&v| v != 0.0).collect();
    if d.is_empty() {
        warn!("all paired differences are zero; reporting p = 1");
        return Ok(WilcoxonResult {
            statistic: 0.0,
            n_nonzero: 0,
            p_value: 1.0,
            exact: true,
        });
    }
    if d.len() < MIN_NONZERO {
        return Err(Error::InsufficientData(format!(
            "signed-rank test needs at least {MIN_NONZERO} nonzero differences, got {}",
            d.len()
        )));
    }
    let abs: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    let statistic = doubled_ranks(&abs)
        .iter()
        .zip(&d)
        .filter(|(_, &v)| v > 0.0)
        .map(|(&r, _)| r as f64 / 2.0)
        .sum();
    let exact = d.len() <= EXACT_LIMIT;
    let p_value = if exact { exact_p_value(&d) } else { normal_p_value(&d) };
    Ok(WilcoxonResult {
        statistic,
        n_nonzero: d.len(),
        p_value,
        exact,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn antisymmetric_differences_are_centered() {
        let d = [1.0, -1.0, 2.5, -2.5, 4.0, -4.0, 0.3, -0.3];
        let r = wilcoxon_signed_rank(&d).unwrap();
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn all_positive_twenty_is_tiny() {
        let d: Vec<f64> = (1..=20).map(f64::from).collect();
        let r = wilcoxon_signed_rank(&d).unwrap();
        assert!(r.exact);
        assert!((r.p_value - 2.0 / 2f64.powi(20)).abs() < 1e-18);
        assert!(r.p_value < 1e-3);
    }

    #[test]
    fn zeros_and_short_inputs() {
        assert_eq!(wilcoxon_signed_rank(&[0.0; 5]).unwrap().p_value, 1.0);
        assert!(wilcoxon_signed_rank(&[1.0, 2.0, 0.0]).is_err());
    }

    #[test]
    fn normal_approximation_agrees_with_exact_near_the_limit() {
        let d: Vec<f64> = (1..=25)
            .map(|i| if i % 3 == 0 { -f64::from(i) } else { f64::from(i) * 1.1 })
            .collect();
        let e = exact_p_value(&d);
        let a = normal_p_value(&d);
        assert!((e - a).abs() < 0.01, "{e} vs {a}");
        let long: Vec<f64> = d.iter().chain(d.iter()).map(|v| v * 1.01).collect();
        assert!(!wilcoxon_signed_rank(&long).unwrap().exact);
    }
}
