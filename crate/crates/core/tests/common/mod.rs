#![allow(dead_code)]

use corrgroup::ExpressionMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn gaussian(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

pub fn matrix(columns: Vec<Vec<f64>>) -> ExpressionMatrix {
    let n = columns[0].len();
    let cells = (0..n).map(|i| format!("c{i}")).collect();
    let genes = (0..columns.len()).map(|j| format!("g{j}")).collect();
    ExpressionMatrix::from_gene_columns(cells, genes, columns).unwrap()
}

/// Genes loading on a few shared factors, so correlations are far from zero.
pub fn factor_matrix(n: usize, p: usize, factors: usize, rng: &mut impl Rng) -> ExpressionMatrix {
    let f: Vec<Vec<f64>> = (0..factors).map(|_| gaussian(n, rng)).collect();
    let cols = (0..p)
        .map(|_| {
            let w: Vec<f64> = (0..factors).map(|_| rng.random_range(-1.0..1.0)).collect();
            let e = gaussian(n, rng);
            (0..n)
                .map(|i| (0..factors).map(|k| w[k] * f[k][i]).sum::<f64>() + 0.4 * e[i])
                .collect()
        })
        .collect();
    matrix(cols)
}

pub fn pearson_two_pass(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

/// Brute-force average linkage: every step rescans all cluster pairs and
/// recomputes their mean dissimilarity from scratch.
pub fn naive_average_linkage(d: &[Vec<f64>]) -> Vec<(Vec<usize>, Vec<usize>, f64)> {
    let mut clusters: Vec<Vec<usize>> = (0..d.len()).map(|i| vec![i]).collect();
    let mut merges = Vec::new();
    while clusters.len() > 1 {
        let mut best = (0, 1, f64::INFINITY);
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let s: f64 = clusters[a]
                    .iter()
                    .flat_map(|&i| clusters[b].iter().map(move |&j| d[i][j]))
                    .sum();
                let h = s / (clusters[a].len() * clusters[b].len()) as f64;
                if h < best.2 {
                    best = (a, b, h);
                }
            }
        }
        let (a, b, h) = best;
        let right = clusters.remove(b);
        let left = clusters.remove(a);
        let mut merged = left.clone();
        merged.extend(&right);
        merged.sort_unstable();
        merges.push((left, right, h));
        clusters.push(merged);
    }
    merges
}
