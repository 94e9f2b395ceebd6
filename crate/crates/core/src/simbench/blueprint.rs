use log::info;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{standardize, ExpressionMatrix};
use crate::enet::{self, CvOptions};
use crate::error::{Error, Result};
use crate::seed;
use crate::stats::{self, logistic};

/// Ground-truth coefficients for phenotype simulation, on the scale of the
/// raw expression values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlueprintModel {
    pub gene_ids: Vec<String>,
    pub beta: Vec<f64>,
    pub intercept: f64,
    pub source: String,
    pub min_cor: f64,
}

impl BlueprintModel {
    pub fn support(&self) -> Vec<usize> {
        (0..self.beta.len()).filter(|&j| self.beta[j] != 0.0).collect()
    }

    pub fn true_flags(&self) -> Vec<bool> {
        self.beta.iter().map(|&b| b != 0.0).collect()
    }
}

/// How genes failing the correlation filter are forced to zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlueprintMode {
    /// Fit only on genes that pass the filter.
    #[default]
    Refit,
    /// Fit on all genes, then zero the coefficients of filtered genes.
    PostHoc,
}

/// For every gene, the largest `|correlation|` with any other gene
/// (0 for constant genes).
pub fn max_abs_correlations(x: &ExpressionMatrix) -> Vec<f64> {
    let std = standardize(x);
    let units: Vec<Option<Vec<f64>>> = (0..x.n_genes())
        .map(|j| {
            if std.is_constant(j) {
                None
            } else {
                stats::unit_centered(std.gene(j))
            }
        })
        .collect();
    (0..units.len())
        .into_par_iter()
        .map(|i| {
            let Some(ui) = &units[i] else { return 0.0 };
            units
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .filter_map(|(_, u)| u.as_ref())
                .map(|u| stats::dot(ui, u).abs().min(1.0))
                .fold(0.0, f64::max)
        })
        .collect()
}

/// Fits an elastic net (penalty by cross-validation) restricted to genes
/// whose correlation with some other gene reaches `min_cor`.
pub fn make_blueprint(
    x: &ExpressionMatrix,
    y: &[u8],
    min_cor: f64,
    mode: BlueprintMode,
    alpha: f64,
    cv: &CvOptions,
    seed: u64,
) -> Result<BlueprintModel> {
    if y.len() != x.n_cells() {
        return Err(Error::DimensionMismatch {
            expected: x.n_cells(),
            actual: y.len(),
        });
    }
    let maxcor = max_abs_correlations(x);
    let passing: Vec<usize> = (0..x.n_genes()).filter(|&j| maxcor[j] >= min_cor).collect();
    if passing.is_empty() {
        return Err(Error::EmptyBlueprint(min_cor));
    }
    info!(
        "{} of {} genes pass the |cor| >= {min_cor} filter",
        passing.len(),
        x.n_genes()
    );
    let fit_on: Vec<usize> = match mode {
        BlueprintMode::Refit => passing.clone(),
        BlueprintMode::PostHoc => (0..x.n_genes()).collect(),
    };
    let cols: Vec<Vec<f64>> = fit_on.iter().map(|&j| x.gene(j).to_vec()).collect();
    let (fit, _) = enet::fit_cv(&cols, y, alpha, seed, cv)?;

    let mut beta = vec![0.0; x.n_genes()];
    for (&j, &b) in fit_on.iter().zip(&fit.coefficients) {
        if maxcor[j] >= min_cor {
            beta[j] = b;
        }
    }
    Ok(BlueprintModel {
        gene_ids: x.gene_ids().to_vec(),
        beta,
        intercept: fit.intercept,
        source: format!(
            "elastic net ({mode:?}, alpha {alpha}) on {} of {} genes with max |cor| >= {min_cor}",
            passing.len(),
            x.n_genes()
        ),
        min_cor,
    })
}

/// Perturbs every nonzero coefficient by `N(0, (sd_fraction·σ_β)²)`, where
/// `σ_β` is the sample sd of the nonzero coefficients. Zeros stay zero.
pub fn jitter(b: &BlueprintModel, sd_fraction: f64, seed: u64) -> Result<BlueprintModel> {
    if sd_fraction.is_nan() || sd_fraction < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "jitter sd fraction {sd_fraction} must be >= 0"
        )));
    }
    let nonzero: Vec<f64> = b.beta.iter().copied().filter(|&v| v != 0.0).collect();
    let sigma = match nonzero.len() {
        0 => 0.0,
        // a single coefficient has no spread; use its magnitude
        1 => nonzero[0].abs(),
        _ => stats::sample_sd(&nonzero, stats::mean(&nonzero)),
    };
    let sd = sd_fraction * sigma;
    let mut out = b.clone();
    if sd == 0.0 {
        return Ok(out);
    }
    let normal = Normal::new(0.0, sd).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut rng = seed::derived_rng(seed, seed::TAG_JITTER, 0);
    for v in out.beta.iter_mut().filter(|v| **v != 0.0) {
        *v += normal.sample(&mut rng);
    }
    Ok(out)
}

/// `qⱼ = logistic(Σᵢ βᵢ xⱼᵢ + intercept)` and `yⱼ ~ Bernoulli(qⱼ)`.
pub fn simulate_phenotypes(x: &ExpressionMatrix, b: &BlueprintModel, seed: u64) -> Result<(Vec<u8>, Vec<f64>)> {
    let index = x.gene_index();
    let mut eta = vec![b.intercept; x.n_cells()];
    let mut missing = Vec::new();
    for (id, &beta) in b.gene_ids.iter().zip(&b.beta) {
        if beta == 0.0 {
            continue;
        }
        match index.get(id.as_str()) {
            Some(&j) => {
                for (e, v) in eta.iter_mut().zip(x.gene(j)) {
                    *e += beta * v;
                }
            }
            None => missing.push(id.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingGenes(missing));
    }
    let q: Vec<f64> = eta.into_iter().map(logistic).collect();
    let mut rng = seed::derived_rng(seed, seed::TAG_PHENOTYPE, 0);
    let y = q.iter().map(|&qj| u8::from(rng.random::<f64>() < qj)).collect();
    Ok((y, q))
}

/// One simulated replicate's ground truth, as written by the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub replicate: usize,
    pub blueprint: BlueprintModel,
    pub cell_ids: Vec<String>,
    pub q: Vec<f64>,
}
