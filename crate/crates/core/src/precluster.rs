//! Pre-grouping of genes with a sign-aware K-Means.
//!
//! Standard K-Means groups by Euclidean distance and cannot put a gene and
//! its mirror image together. The modified variant assigns each gene to the
//! center it is most correlated with in absolute value and records the sign
//! of that correlation, so centers are signed averages. Applied repeatedly
//! to the largest cluster it cuts the gene set into subsets small enough for
//! hierarchical clustering.

use log::{debug, warn};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::StandardizedMatrix;
use crate::error::{Error, Result};
use crate::seed;
use crate::stats;

/// Centers whose |correlation| exceeds `1 - PARALLEL_TOL` count as duplicates.
const PARALLEL_TOL: f64 = 1e-12;

/// A set of genes together with an orientation (+1 or -1) for each.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneSet {
    pub genes: Vec<usize>,
    pub signs: Vec<i8>,
}

impl GeneSet {
    /// All genes with positive orientation.
    pub fn positive(genes: Vec<usize>) -> Self {
        let signs = vec![1; genes.len()];
        Self { genes, signs }
    }

    pub fn len(&self) -> usize {
        self.genes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.genes.is_empty()
    }

    /// The oriented (sign-adjusted) standardized vector of member `idx`.
    pub fn oriented(&self, x: &StandardizedMatrix, idx: usize) -> Vec<f64> {
        let s = f64::from(self.signs[idx]);
        x.gene(self.genes[idx]).iter().map(|v| s * v).collect()
    }
}

/// Output of the modified K-Means on one gene set.
#[derive(Debug, Clone)]
pub struct SignedClustering {
    /// Gene indices, in the order of the input set.
    pub genes: Vec<usize>,
    /// Cluster label per gene; labels are `0..centers.len()` with no gaps.
    pub membership: Vec<usize>,
    /// Sign of each gene relative to its cluster center, expressed against
    /// the raw standardized gene (input orientation already folded in).
    pub signs: Vec<i8>,
    pub centers: Vec<Vec<f64>>,
    pub iterations: usize,
    pub converged: bool,
}

impl SignedClustering {
    pub fn n_clusters(&self) -> usize {
        self.centers.len()
    }

    /// Splits the clustering into one [`GeneSet`] per cluster.
    pub fn clusters(&self) -> Vec<GeneSet> {
        let mut out: Vec<GeneSet> = (0..self.n_clusters())
            .map(|_| GeneSet {
                genes: Vec::new(),
                signs: Vec::new(),
            })
            .collect();
        for ((g, &k), &s) in self.genes.iter().zip(&self.membership).zip(&self.signs) {
            out[k].genes.push(*g);
            out[k].signs.push(s);
        }
        out
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Standard Euclidean K-Means (k-means++ seeding, Lloyd iterations) on the
/// oriented gene vectors. Returns a label in `0..k` per gene.
pub fn kmeans_init(x: &StandardizedMatrix, set: &GeneSet, k: usize, seed: u64) -> Result<Vec<usize>> {
    let m = set.len();
    if k == 0 || k > m {
        return Err(Error::InvalidArgument(format!(
            "K = {k} must be between 1 and the number of genes ({m})"
        )));
    }
    let points: Vec<Vec<f64>> = (0..m).map(|i| set.oriented(x, i)).collect();
    let mut rng = seed::rng(seed);

    // k-means++ seeding
    let mut chosen = vec![false; m];
    let first = rng.random_range(0..m);
    chosen[first] = true;
    let mut centers = vec![points[first].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 {
                    pick = Some(i);
                    if target < d {
                        break;
                    }
                    target -= d;
                }
            }
            pick.expect("positive total implies a positive weight")
        } else {
            // every remaining point coincides with a center
            let free: Vec<usize> = (0..m).filter(|&i| !chosen[i]).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen[pick] = true;
        centers.push(points[pick].clone());
        let c = centers.last().unwrap();
        for (d, p) in d2.iter_mut().zip(&points) {
            *d = d.min(sq_dist(p, c));
        }
    }

    let nearest = |p: &[f64], centers: &[Vec<f64>]| -> usize {
        let mut best = (0, f64::INFINITY);
        for (c, center) in centers.iter().enumerate() {
            let d = sq_dist(p, center);
            if d < best.1 {
                best = (c, d);
            }
        }
        best.0
    };

    let mut labels: Vec<usize> = points.iter().map(|p| nearest(p, &centers)).collect();
    let n = x.n_cells();
    for _ in 0..100 {
        let mut sums = vec![vec![0.0; n]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            sums[l].iter_mut().zip(p).for_each(|(s, v)| *s += v);
        }
        for c in 0..k {
            // empty clusters keep their previous center
            if counts[c] > 0 {
                let inv = 1.0 / counts[c] as f64;
                centers[c] = sums[c].iter().map(|s| s * inv).collect();
            }
        }
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centers)).collect();
        if next == labels {
            break;
        }
        labels = next;
    }
    Ok(labels)
}

/// Signed average of the member genes of each cluster.
fn signed_centers(
    x: &StandardizedMatrix,
    genes: &[usize],
    membership: &[usize],
    signs: &[i8],
    k: usize,
) -> Vec<Option<Vec<f64>>> {
    let n = x.n_cells();
    let mut sums = vec![vec![0.0; n]; k];
    let mut counts = vec![0usize; k];
    for ((&g, &l), &s) in genes.iter().zip(membership).zip(signs) {
        counts[l] += 1;
        let s = f64::from(s);
        sums[l].iter_mut().zip(x.gene(g)).for_each(|(acc, v)| *acc += s * v);
    }
    sums.into_iter()
        .zip(counts)
        .map(|(sum, c)| (c > 0).then(|| sum.iter().map(|v| v / c as f64).collect()))
        .collect()
}

/// Modified K-Means with `1 - |correlation|` assignment and sign tracking.
///
/// Iterates until neither memberships nor signs change, or `max_iter`
/// iterations have run (then `converged` is false).
pub fn modified_kmeans(
    x: &StandardizedMatrix,
    set: &GeneSet,
    k: usize,
    init: &[usize],
    max_iter: usize,
) -> Result<SignedClustering> {
    let m = set.len();
    if init.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            actual: init.len(),
        });
    }
    if let Some(&bad) = init.iter().find(|&&l| l >= k) {
        return Err(Error::InvalidArgument(format!(
            "initial label {bad} out of range for K = {k}"
        )));
    }
    if let Some(&g) = set.genes.iter().find(|&&g| x.is_constant(g)) {
        return Err(Error::UndefinedCorrelation(format!(
            "gene '{}' is constant",
            x.gene_ids()[g]
        )));
    }

    let scale = ((x.n_cells() - 1) as f64).sqrt();
    let mut membership = init.to_vec();
    // S_i = +1 relative to the input orientation
    let mut signs = set.signs.clone();
    let mut iterations = 0;
    let mut converged = false;
    let mut unit_centers: Vec<Option<Vec<f64>>>;

    loop {
        // U-step
        let centers = signed_centers(x, &set.genes, &membership, &signs, k);
        unit_centers = centers
            .iter()
            .map(|c| c.as_deref().and_then(stats::unit_centered))
            .collect();
        // a center parallel to an earlier one can never win a gene; its
        // members are judged against the center it duplicates
        let mut fit_center: Vec<usize> = (0..k).collect();
        for c in 1..k {
            let Some(u) = &unit_centers[c] else { continue };
            let twin = (0..c).find(|&d| {
                unit_centers[d]
                    .as_ref()
                    .is_some_and(|v| stats::dot(u, v).abs() > 1.0 - PARALLEL_TOL)
            });
            if let Some(d) = twin {
                fit_center[c] = d;
                unit_centers[c] = None;
            }
        }
        if unit_centers.iter().any(Option::is_none) {
            reseed_degenerate(
                x,
                set,
                &membership,
                &signs,
                &centers,
                &fit_center,
                &mut unit_centers,
                scale,
            );
        }

        if iterations == max_iter {
            break;
        }
        iterations += 1;

        // A-step
        let assigned: Vec<(usize, i8)> = set
            .genes
            .par_iter()
            .map(|&g| {
                let xi = x.gene(g);
                let mut best: Option<(usize, f64)> = None;
                for (c, u) in unit_centers.iter().enumerate() {
                    if let Some(u) = u {
                        let r = stats::dot(u, xi) / scale;
                        // strict comparison: lowest index wins ties
                        if best.is_none_or(|(_, b)| r.abs() > b.abs()) {
                            best = Some((c, r));
                        }
                    }
                }
                let (c, r) = best.expect("at least one non-degenerate center");
                (c, if r < 0.0 { -1 } else { 1 })
            })
            .collect();
        let (next_membership, next_signs): (Vec<usize>, Vec<i8>) = assigned.into_iter().unzip();
        if next_membership == membership && next_signs == signs {
            converged = true;
            break;
        }
        membership = next_membership;
        signs = next_signs;
    }

    if !converged {
        warn!("modified K-Means stopped after {max_iter} iterations without converging");
    }

    // drop empty clusters and relabel densely
    let mut remap = vec![usize::MAX; k];
    let mut centers_out = Vec::new();
    let raw_centers = signed_centers(x, &set.genes, &membership, &signs, k);
    for (c, center) in raw_centers.into_iter().enumerate() {
        if let Some(center) = center {
            remap[c] = centers_out.len();
            centers_out.push(center);
        }
    }
    let membership = membership.into_iter().map(|l| remap[l]).collect();

    Ok(SignedClustering {
        genes: set.genes.clone(),
        membership,
        signs,
        centers: centers_out,
        iterations,
        converged,
    })
}

/// Replaces each constant or duplicated center by the oriented gene that
/// currently fits its own center worst. An empty cluster is re-seeded the
/// same way, unless every gene already fits its center perfectly, in which
/// case it stays empty and is dropped.
#[allow(clippy::too_many_arguments)]
fn reseed_degenerate(
    x: &StandardizedMatrix,
    set: &GeneSet,
    membership: &[usize],
    signs: &[i8],
    centers: &[Option<Vec<f64>>],
    fit_center: &[usize],
    unit_centers: &mut [Option<Vec<f64>>],
    scale: f64,
) {
    let mut used = vec![false; set.len()];
    for c in 0..centers.len() {
        if unit_centers[c].is_some() {
            continue;
        }
        let mut worst: Option<(usize, f64)> = None;
        for (i, &g) in set.genes.iter().enumerate() {
            if used[i] {
                continue;
            }
            let own = fit_center[membership[i]];
            let fit = match &unit_centers[own] {
                Some(u) if own != c => (stats::dot(u, x.gene(g)) / scale).abs(),
                _ => 0.0,
            };
            if worst.is_none_or(|(_, w)| fit < w) {
                worst = Some((i, fit));
            }
        }
        let Some((i, fit)) = worst else { continue };
        if centers[c].is_none() {
            if fit > 1.0 - PARALLEL_TOL {
                continue;
            }
            debug!("cluster {c} emptied; re-seeding it");
        } else {
            warn!("cluster center {c} is constant or duplicates another; re-seeding it");
        }
        used[i] = true;
        let s = f64::from(signs[i]);
        let v: Vec<f64> = x.gene(set.genes[i]).iter().map(|v| s * v).collect();
        unit_centers[c] = stats::unit_centered(&v);
    }
}

/// Disjoint subsets of the retained genes, each below a size cap.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PartitionSet {
    pub subsets: Vec<GeneSet>,
    pub max_size: usize,
}

impl PartitionSet {
    pub fn largest(&self) -> usize {
        self.subsets.iter().map(GeneSet::len).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub k: usize,
    pub max_size: usize,
    pub max_iter: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            k: 10,
            max_size: 1000,
            max_iter: 100,
        }
    }
}

/// Repeatedly splits the largest subset until every subset has fewer than
/// `max_size` genes. Signs compose across levels: each split runs on the
/// genes as oriented by the previous level.
pub fn iterative_split(x: &StandardizedMatrix, config: &SplitConfig, seed: u64) -> Result<PartitionSet> {
    if config.k < 2 {
        return Err(Error::InvalidArgument("K must be at least 2 to split".into()));
    }
    if config.max_size < 1 {
        return Err(Error::InvalidArgument("max_size must be positive".into()));
    }
    let mut open = vec![GeneSet::positive(x.retained_genes())];
    let mut done = Vec::new();
    let mut split_index = 0u64;

    while let Some(pos) = largest_index(&open) {
        if open[pos].len() < config.max_size {
            break;
        }
        let set = open.swap_remove(pos);
        let k = config.k.min(set.len());
        let init = kmeans_init(x, &set, k, seed::derive_seed(seed, seed::TAG_KMEANS, split_index))?;
        split_index += 1;
        let clustering = modified_kmeans(x, &set, k, &init, config.max_iter)?;
        if clustering.n_clusters() < 2 {
            warn!(
                "subset of {} genes cannot be split further; keeping it whole",
                set.len()
            );
            done.extend(clustering.clusters());
            continue;
        }
        open.extend(clustering.clusters());
    }
    if split_index == 0 && open.len() == 1 && open[0].len() > 1 {
        // small enough already: orient every gene to the set's signed center
        let root = open.pop().unwrap();
        let init = vec![0; root.len()];
        open.extend(modified_kmeans(x, &root, 1, &init, config.max_iter)?.clusters());
    }
    done.extend(open);

    for s in &mut done {
        let mut pairs: Vec<(usize, i8)> = s.genes.iter().copied().zip(s.signs.iter().copied()).collect();
        pairs.sort_unstable();
        (s.genes, s.signs) = pairs.into_iter().unzip();
    }
    done.retain(|s| !s.is_empty());
    done.sort_by_key(|s| s.genes[0]);
    Ok(PartitionSet {
        subsets: done,
        max_size: config.max_size,
    })
}

fn largest_index(sets: &[GeneSet]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, s) in sets.iter().enumerate() {
        if best.is_none_or(|b| s.len() > sets[b].len()) {
            best = Some(i);
        }
    }
    best
}
