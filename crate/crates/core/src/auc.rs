//! Area under the ROC curve via the Mann–Whitney statistic.

use crate::error::{Error, Result};

/// `(concordant + 0.5·tied) / (n₁·n₀)` over all positive–negative pairs,
/// computed from mid-ranks in `O(n log n)`.
pub fn auc(y: &[u8], scores: &[f64]) -> Result<f64> {
    if y.len() != scores.len() {
        return Err(Error::DimensionMismatch {
            expected: y.len(),
            actual: scores.len(),
        });
    }
    let n1 = y.iter().filter(|&&v| v == 1).count();
    let n0 = y.len() - n1;
    if n1 == 0 || n0 == 0 {
        return Err(Error::DegenerateLabels);
    }
    let mut order: Vec<usize> = (0..y.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // sum of doubled mid-ranks of positives keeps everything integral
    let mut rank_sum2: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1..=j+1, doubled mid-rank = i + j + 2
        let mid2 = (i + j + 2) as u64;
        let positives = order[i..=j].iter().filter(|&&k| y[k] == 1).count() as u64;
        rank_sum2 += mid2 * positives;
        i = j + 1;
    }
    let n1u = n1 as u64;
    // 2U = 2R - n1(n1+1)
    let u2 = rank_sum2 - n1u * (n1u + 1);
    Ok(u2 as f64 / (2.0 * n1 as f64 * n0 as f64))
}
