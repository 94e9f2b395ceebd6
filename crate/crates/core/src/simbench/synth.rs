use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::ExpressionMatrix;
use crate::error::{Error, Result};
use crate::seed;
use crate::stats::logistic;

/// A block of genes sharing one latent factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub size: usize,
    /// Target within-block absolute correlation.
    pub rho: f64,
    /// Sign pattern, cycled over the block's genes. Empty means all `+1`.
    #[serde(default)]
    pub signs: Vec<i8>,
}

impl BlockSpec {
    pub fn sign(&self, i: usize) -> i8 {
        if self.signs.is_empty() {
            1
        } else {
            self.signs[i % self.signs.len()]
        }
    }
}

/// Affine map applied to every simulated value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub location: f64,
    pub scale: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            location: 0.0,
            scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDesign {
    pub n_cells: usize,
    pub n_genes: usize,
    pub blocks: Vec<BlockSpec>,
    #[serde(default)]
    pub noise: NoiseModel,
    /// Blocks driving the phenotype from which the blueprint is learned.
    #[serde(default)]
    pub causal_blocks: Vec<usize>,
    /// Log-odds effect of each causal block's signed mean.
    #[serde(default = "default_effect")]
    pub effect: f64,
    #[serde(default)]
    pub intercept: f64,
    pub seed: u64,
}

fn default_effect() -> f64 {
    1.5
}

impl SyntheticDesign {
    pub fn validate(&self) -> Result<()> {
        let total: usize = self.blocks.iter().map(|b| b.size).sum();
        if total > self.n_genes {
            return Err(Error::Validation(format!(
                "blocks need {total} genes but the design has {}",
                self.n_genes
            )));
        }
        if self.n_cells < 2 || self.n_genes < 1 {
            return Err(Error::Validation("design needs n_cells >= 2 and n_genes >= 1".into()));
        }
        for (i, b) in self.blocks.iter().enumerate() {
            if !(0.0..1.0).contains(&b.rho) {
                return Err(Error::Validation(format!("block {i}: rho {} outside [0, 1)", b.rho)));
            }
            if b.signs.iter().any(|&s| s != 1 && s != -1) {
                return Err(Error::Validation(format!("block {i}: signs must be +1 or -1")));
            }
        }
        if let Some(&c) = self.causal_blocks.iter().find(|&&c| c >= self.blocks.len()) {
            return Err(Error::Validation(format!("causal block {c} does not exist")));
        }
        if self.noise.scale.is_nan() || self.noise.scale <= 0.0 {
            return Err(Error::Validation("noise scale must be positive".into()));
        }
        Ok(())
    }

    /// Gene index range of every block; blocks occupy the leading genes.
    pub fn block_ranges(&self) -> Vec<std::ops::Range<usize>> {
        let mut start = 0;
        self.blocks
            .iter()
            .map(|b| {
                let r = start..start + b.size;
                start += b.size;
                r
            })
            .collect()
    }
}

/// Block genes are `sᵢ·(√ρ·f_b + √(1−ρ)·εᵢ)`; the rest are independent
/// standard Gaussians. Values are then mapped through the noise model.
pub fn synth_expression(design: &SyntheticDesign) -> Result<ExpressionMatrix> {
    design.validate()?;
    let n = design.n_cells;
    let mut rng = seed::derived_rng(design.seed, seed::TAG_SYNTH, 0);
    let gaussian =
        |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> { (0..n).map(|_| StandardNormal.sample(rng)).collect() };
    let mut columns = Vec::with_capacity(design.n_genes);
    for block in &design.blocks {
        let factor = gaussian(&mut rng);
        let (a, b) = (block.rho.sqrt(), (1.0 - block.rho).sqrt());
        for i in 0..block.size {
            let s = f64::from(block.sign(i));
            let eps = gaussian(&mut rng);
            columns.push(factor.iter().zip(&eps).map(|(f, e)| s * (a * f + b * e)).collect());
        }
    }
    while columns.len() < design.n_genes {
        columns.push(gaussian(&mut rng));
    }
    let NoiseModel { location, scale } = design.noise;
    for col in &mut columns {
        col.iter_mut().for_each(|v: &mut f64| *v = location + scale * *v);
    }
    ExpressionMatrix::from_gene_columns(
        (0..n).map(|i| format!("cell{i}")).collect(),
        (0..design.n_genes).map(|j| format!("gene{j}")).collect(),
        columns,
    )
}

/// Phenotype driven by the signed means of the causal blocks, used as the
/// source labels for blueprint fitting.
pub fn planted_phenotype(design: &SyntheticDesign, x: &ExpressionMatrix) -> Result<Vec<u8>> {
    design.validate()?;
    let ranges = design.block_ranges();
    let n = x.n_cells();
    let mut eta = vec![design.intercept; n];
    for &b in &design.causal_blocks {
        let block = &design.blocks[b];
        let m = block.size as f64;
        for (i, j) in ranges[b].clone().enumerate() {
            let s = f64::from(block.sign(i));
            let g = x.gene(j);
            for c in 0..n {
                let z = (g[c] - design.noise.location) / design.noise.scale;
                eta[c] += design.effect * s * z / m;
            }
        }
    }
    let mut rng = seed::derived_rng(design.seed, seed::TAG_BLUEPRINT, 0);
    Ok(eta
        .into_iter()
        .map(|e| u8::from(rng.random::<f64>() < logistic(e)))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::pearson;

    fn design(blocks: Vec<BlockSpec>, n: usize, p: usize, seed: u64) -> SyntheticDesign {
        SyntheticDesign {
            n_cells: n,
            n_genes: p,
            blocks,
            noise: NoiseModel::default(),
            causal_blocks: vec![],
            effect: 1.0,
            intercept: 0.0,
            seed,
        }
    }

    #[test]
    fn uncorrelated_block_stays_near_zero() {
        let mut means = Vec::new();
        for s in 0..50 {
            let d = design(
                vec![BlockSpec {
                    size: 5,
                    rho: 0.0,
                    signs: vec![],
                }],
                200,
                5,
                s,
            );
            let x = synth_expression(&d).unwrap();
            let mut acc = Vec::new();
            for i in 0..5 {
                for j in (i + 1)..5 {
                    acc.push(pearson(x.gene(i), x.gene(j)).unwrap().abs());
                }
            }
            means.push(acc.iter().sum::<f64>() / acc.len() as f64);
        }
        assert!(means.iter().all(|&m| m < 0.15), "{means:?}");
    }

    #[test]
    fn strong_block_correlations_are_near_target() {
        let d = design(
            vec![BlockSpec {
                size: 10,
                rho: 0.95,
                signs: vec![],
            }],
            500,
            10,
            3,
        );
        let x = synth_expression(&d).unwrap();
        let mut inside = 0;
        let mut total = 0;
        for i in 0..10 {
            for j in (i + 1)..10 {
                let r = pearson(x.gene(i), x.gene(j)).unwrap();
                total += 1;
                if (0.90..=0.99).contains(&r) {
                    inside += 1;
                }
            }
        }
        assert!(inside as f64 >= 0.95 * total as f64);
    }

    #[test]
    fn alternating_signs_anticorrelate() {
        let d = design(
            vec![BlockSpec {
                size: 2,
                rho: 0.8,
                signs: vec![1, -1],
            }],
            100,
            4,
            5,
        );
        let x = synth_expression(&d).unwrap();
        assert!(pearson(x.gene(0), x.gene(1)).unwrap() < 0.0);
    }

    #[test]
    fn invalid_designs_rejected() {
        let d = design(
            vec![BlockSpec {
                size: 5,
                rho: 1.0,
                signs: vec![],
            }],
            10,
            5,
            0,
        );
        assert!(d.validate().is_err());
        let d = design(
            vec![BlockSpec {
                size: 6,
                rho: 0.5,
                signs: vec![],
            }],
            10,
            5,
            0,
        );
        assert!(d.validate().is_err());
    }
}
