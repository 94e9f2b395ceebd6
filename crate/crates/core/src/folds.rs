//! Stratified K-fold assignment.

use log::warn;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};

/// Number of observations in the smaller class.
pub fn minority_count(y: &[u8]) -> usize {
    let ones = y.iter().filter(|&&v| v == 1).count();
    ones.min(y.len() - ones)
}

/// Effective fold count: reduced (with a warning) when the minority class
/// has fewer members than requested folds.
pub fn effective_folds(y: &[u8], folds: usize) -> Result<usize> {
    let minority = minority_count(y);
    if minority == 0 {
        return Err(Error::DegenerateLabels);
    }
    if folds < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 folds, got {folds}")));
    }
    if minority < folds {
        if minority < 2 {
            return Err(Error::InsufficientData(
                "minority class has a single member; cannot cross-validate".into(),
            ));
        }
        warn!("minority class has {minority} members; reducing folds from {folds} to {minority}");
        return Ok(minority);
    }
    Ok(folds)
}

/// Assigns every observation a fold in `0..folds`.
///
/// Each class is shuffled and dealt round-robin, continuing the deal across
/// classes, so fold sizes differ by at most one and every fold receives
/// `⌊n_c/folds⌋` or `⌈n_c/folds⌉` members of class `c`.
pub fn stratified_folds(y: &[u8], folds: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut assignment = vec![0usize; y.len()];
    let mut position = 0usize;
    for class in [0u8, 1u8] {
        let mut idx: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        idx.shuffle(rng);
        for i in idx {
            assignment[i] = position % folds;
            position += 1;
        }
    }
    assignment
}

/// `(train, test)` index lists for fold `k`.
pub fn split(assignment: &[usize], k: usize) -> (Vec<usize>, Vec<usize>) {
    (0..assignment.len()).partition(|&i| assignment[i] != k)
}
