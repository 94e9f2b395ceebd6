//! Inputs shared by the kernel benchmarks.

use corrgroup::simbench::{synth_expression, BlockSpec, NoiseModel, SyntheticDesign};
use corrgroup::ExpressionMatrix;

/// `n` cells by `p` genes with `p / 50` correlated blocks of 15 genes.
pub fn blocked_matrix(n: usize, p: usize, seed: u64) -> ExpressionMatrix {
    let design = SyntheticDesign {
        n_cells: n,
        n_genes: p,
        blocks: (0..p / 50)
            .map(|_| BlockSpec {
                size: 15,
                rho: 0.9,
                signs: vec![1, -1],
            })
            .collect(),
        noise: NoiseModel::default(),
        causal_blocks: Vec::new(),
        effect: 0.0,
        intercept: 0.0,
        seed,
    };
    synth_expression(&design).expect("valid benchmark design")
}

/// Labels driven by the first gene, with both classes present.
pub fn labels_from_first_gene(x: &ExpressionMatrix) -> Vec<u8> {
    let g = x.gene(0);
    let mut sorted = g.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    g.iter().map(|&v| u8::from(v >= median)).collect()
}

/// Columns of `x` as owned vectors, the layout the solver expects.
pub fn columns(x: &ExpressionMatrix) -> Vec<Vec<f64>> {
    (0..x.n_genes()).map(|j| x.gene(j).to_vec()).collect()
}
