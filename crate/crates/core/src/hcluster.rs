//! Average-linkage hierarchical clustering within pre-grouped subsets,
//! dendrogram cutting, and signed-average group representatives.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::data::{ExpressionMatrix, StandardizedMatrix};
use crate::error::{Error, Result};
use crate::precluster::{GeneSet, PartitionSet};
use crate::stats;

/// One agglomeration step. Node ids follow the usual convention: leaves are
/// `0..m` (positions in [`Dendrogram::leaves`]) and merge `i` creates node `m + i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub leaves: GeneSet,
    pub merges: Vec<Merge>,
}

impl Dendrogram {
    pub fn n_leaves(&self) -> usize {
        self.leaves.len()
    }

    pub fn max_height(&self) -> Option<f64> {
        self.merges.iter().map(|m| m.height).reduce(f64::max)
    }

    pub fn min_height(&self) -> Option<f64> {
        self.merges.iter().map(|m| m.height).reduce(f64::min)
    }

    /// Leaf positions under `node`.
    pub fn members(&self, node: usize) -> Vec<usize> {
        let m = self.n_leaves();
        let mut out = Vec::new();
        let mut stack = vec![node];
        while let Some(v) = stack.pop() {
            if v < m {
                out.push(v);
            } else {
                let mg = &self.merges[v - m];
                stack.push(mg.left);
                stack.push(mg.right);
            }
        }
        out.sort_unstable();
        out
    }
}

/// Pairwise `1 - correlation` of the oriented genes of `set`, row-major.
pub fn dissimilarity_matrix(set: &GeneSet, x: &StandardizedMatrix) -> Result<Vec<f64>> {
    let m = set.len();
    let units = (0..m)
        .map(|i| {
            stats::unit_centered(&set.oriented(x, i)).ok_or_else(|| {
                Error::UndefinedCorrelation(format!("gene '{}' is constant", x.gene_ids()[set.genes[i]]))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut d = vec![0.0; m * m];
    for i in 0..m {
        for j in (i + 1)..m {
            let r = stats::dot(&units[i], &units[j]).clamp(-1.0, 1.0);
            d[i * m + j] = 1.0 - r;
            d[j * m + i] = 1.0 - r;
        }
    }
    Ok(d)
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut a: usize) -> usize {
        while self.parent[a] != a {
            self.parent[a] = self.parent[self.parent[a]];
            a = self.parent[a];
        }
        a
    }

    fn union(&mut self, a: usize, b: usize) -> usize {
        let (ra, rb) = (self.find(a), self.find(b));
        self.parent[rb] = ra;
        ra
    }
}

/// Average-linkage agglomerative clustering under `1 - correlation` of the
/// sign-adjusted genes.
///
/// Uses the nearest-neighbour chain on a dense dissimilarity matrix with
/// Lance-Williams updates, then orders merges by height; for average linkage
/// this gives the same tree as repeatedly merging the globally closest pair.
pub fn build_dendrogram(set: &GeneSet, x: &StandardizedMatrix) -> Result<Dendrogram> {
    let m = set.len();
    if m == 0 {
        return Err(Error::InvalidArgument("empty gene subset".into()));
    }
    let mut d = dissimilarity_matrix(set, x)?;
    let mut active = vec![true; m];
    let mut size = vec![1usize; m];
    // chain-order merges: (slot a, slot b, height, sort key)
    let mut raw: Vec<(usize, usize, f64, f64)> = Vec::with_capacity(m.saturating_sub(1));
    let mut key_of_slot = vec![f64::NEG_INFINITY; m];
    let mut chain: Vec<usize> = Vec::new();
    let mut remaining = m;

    while remaining > 1 {
        if chain.is_empty() {
            chain.push(active.iter().position(|&a| a).unwrap());
        }
        let (a, b) = loop {
            let a = *chain.last().unwrap();
            let prev = chain.len().checked_sub(2).map(|i| chain[i]);
            let mut best = prev;
            let mut best_d = prev.map_or(f64::INFINITY, |p| d[a * m + p]);
            for k in 0..m {
                if active[k] && k != a && d[a * m + k] < best_d {
                    best = Some(k);
                    best_d = d[a * m + k];
                }
            }
            let b = best.expect("two active clusters remain");
            if Some(b) == prev {
                break (a, b);
            }
            chain.push(b);
        };
        chain.pop();
        chain.pop();

        let h = d[a * m + b];
        // parents never sort ahead of their children, even under rounding
        let key = h.max(key_of_slot[a]).max(key_of_slot[b]);
        raw.push((a, b, h, key));

        let (keep, drop) = (a.min(b), a.max(b));
        let (sa, sb) = (size[keep] as f64, size[drop] as f64);
        for k in 0..m {
            if active[k] && k != keep && k != drop {
                let v = (sa * d[keep * m + k] + sb * d[drop * m + k]) / (sa + sb);
                d[keep * m + k] = v;
                d[k * m + keep] = v;
            }
        }
        active[drop] = false;
        size[keep] += size[drop];
        key_of_slot[keep] = key;
        remaining -= 1;
    }

    let mut order: Vec<usize> = (0..raw.len()).collect();
    order.sort_by(|&i, &j| raw[i].3.total_cmp(&raw[j].3).then(i.cmp(&j)));

    let mut uf = UnionFind::new(m);
    let mut node_of_root: Vec<usize> = (0..m).collect();
    let mut node_size = vec![1usize; 2 * m];
    let mut merges = Vec::with_capacity(raw.len());
    for (i, &idx) in order.iter().enumerate() {
        let (a, b, h, _) = raw[idx];
        let (ra, rb) = (uf.find(a), uf.find(b));
        let (na, nb) = (node_of_root[ra], node_of_root[rb]);
        let (left, right) = (na.min(nb), na.max(nb));
        let root = uf.union(ra, rb);
        let id = m + i;
        node_of_root[root] = id;
        node_size[id] = node_size[left] + node_size[right];
        merges.push(Merge {
            left,
            right,
            height: h,
            size: node_size[id],
        });
    }

    Ok(Dendrogram {
        leaves: set.clone(),
        merges,
    })
}

/// Cuts a dendrogram at dissimilarity `c`: a merge survives iff its height
/// is `<= c` and both of its children survive. Each group is a maximal
/// surviving subtree, with its genes and signs in ascending gene order.
pub fn cut_dendrogram(d: &Dendrogram, c: f64) -> Vec<GeneSet> {
    let m = d.n_leaves();
    let mut survived = vec![true; m + d.merges.len()];
    let mut uf = UnionFind::new(m);
    for (i, mg) in d.merges.iter().enumerate() {
        let ok = mg.height <= c && survived[mg.left] && survived[mg.right];
        survived[m + i] = ok;
        if ok {
            let (a, b) = (first_leaf(d, mg.left), first_leaf(d, mg.right));
            uf.union(a, b);
        }
    }
    let mut by_root: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for leaf in 0..m {
        by_root.entry(uf.find(leaf)).or_default().push(leaf);
    }
    let mut groups: Vec<GeneSet> = by_root
        .into_values()
        .map(|leaves| {
            let mut pairs: Vec<(usize, i8)> = leaves.iter().map(|&l| (d.leaves.genes[l], d.leaves.signs[l])).collect();
            pairs.sort_unstable();
            let (genes, signs) = pairs.into_iter().unzip();
            GeneSet { genes, signs }
        })
        .collect();
    groups.sort_by_key(|g| g.genes[0]);
    groups
}

fn first_leaf(d: &Dendrogram, mut node: usize) -> usize {
    let m = d.n_leaves();
    while node >= m {
        node = d.merges[node - m].left;
    }
    node
}

/// Cuts every dendrogram at `c` and returns all groups ordered by their
/// smallest gene index.
pub fn cut_all(dendrograms: &[Dendrogram], c: f64) -> Vec<GeneSet> {
    let mut groups: Vec<GeneSet> = dendrograms.iter().flat_map(|d| cut_dendrogram(d, c)).collect();
    groups.sort_by_key(|g| g.genes[0]);
    groups
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleGene {
    pub gene_id: String,
    pub sign: i8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Group {
    pub id: usize,
    pub genes: Vec<RuleGene>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneScale {
    pub mean: f64,
    pub sd: f64,
}

/// Final gene grouping with the training standardization needed to apply it
/// to new cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupingRule {
    pub threshold: f64,
    pub groups: Vec<Group>,
    pub standardization: BTreeMap<String, GeneScale>,
}

impl GroupingRule {
    /// Builds a rule from index-based groups over a training matrix.
    pub fn from_groups(threshold: f64, groups: &[GeneSet], std: &StandardizedMatrix) -> Self {
        let ids = std.gene_ids();
        let mut standardization = BTreeMap::new();
        let groups = groups
            .iter()
            .enumerate()
            .map(|(id, g)| Group {
                id,
                genes: g
                    .genes
                    .iter()
                    .zip(&g.signs)
                    .map(|(&j, &sign)| {
                        standardization.insert(
                            ids[j].clone(),
                            GeneScale {
                                mean: std.gene_means()[j],
                                sd: std.gene_sds()[j],
                            },
                        );
                        RuleGene {
                            gene_id: ids[j].clone(),
                            sign,
                        }
                    })
                    .collect(),
            })
            .collect();
        Self {
            threshold,
            groups,
            standardization,
        }
    }

    /// Every retained gene in its own group with sign +1.
    pub fn identity(std: &StandardizedMatrix) -> Self {
        let groups: Vec<GeneSet> = std
            .retained_genes()
            .into_iter()
            .map(|j| GeneSet::positive(vec![j]))
            .collect();
        Self::from_groups(0.0, &groups, std)
    }

    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn n_genes(&self) -> usize {
        self.groups.iter().map(|g| g.genes.len()).sum()
    }
}

/// Union of per-subset cuts at threshold `c`.
pub fn make_rule(
    partition: &PartitionSet,
    dendrograms: &[Dendrogram],
    c: f64,
    std: &StandardizedMatrix,
) -> Result<GroupingRule> {
    if dendrograms.len() != partition.subsets.len() {
        return Err(Error::DimensionMismatch {
            expected: partition.subsets.len(),
            actual: dendrograms.len(),
        });
    }
    if c < 0.0 {
        return Err(Error::InvalidArgument(format!("threshold {c} is negative")));
    }
    Ok(GroupingRule::from_groups(c, &cut_all(dendrograms, c), std))
}

/// `(1/m) Σ s_i v_i` accumulated in member order.
fn signed_mean<'a>(members: impl Iterator<Item = (i8, &'a [f64])>, n: usize) -> Vec<f64> {
    let mut z = vec![0.0; n];
    let mut count = 0usize;
    for (s, v) in members {
        let s = f64::from(s);
        z.iter_mut().zip(v).for_each(|(acc, x)| *acc += s * x);
        count += 1;
    }
    let m = count as f64;
    z.iter_mut().for_each(|v| *v /= m);
    z
}

/// Representatives of index-based groups over an already standardized matrix.
pub fn representatives_standardized(groups: &[GeneSet], std: &StandardizedMatrix) -> Vec<Vec<f64>> {
    groups
        .iter()
        .map(|g| {
            signed_mean(
                g.signs.iter().zip(&g.genes).map(|(&s, &j)| (s, std.gene(j))),
                std.n_cells(),
            )
        })
        .collect()
}

/// Representative vectors (one per group, each of length `n`) for a raw
/// matrix, standardized with the rule's stored training parameters.
pub fn representatives(rule: &GroupingRule, x: &ExpressionMatrix) -> Result<Vec<Vec<f64>>> {
    let index = x.gene_index();
    let mut missing = Vec::new();
    let mut scaled: HashMap<&str, Vec<f64>> = HashMap::new();
    for g in rule.groups.iter().flat_map(|g| &g.genes) {
        match index.get(g.gene_id.as_str()) {
            Some(&j) => {
                let scale = rule
                    .standardization
                    .get(&g.gene_id)
                    .ok_or_else(|| Error::Validation(format!("no standardization stored for '{}'", g.gene_id)))?;
                scaled.insert(
                    g.gene_id.as_str(),
                    crate::data::standardize_with(x.gene(j), scale.mean, scale.sd),
                );
            }
            None => missing.push(g.gene_id.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingGenes(missing));
    }
    Ok(rule
        .groups
        .iter()
        .map(|g| {
            signed_mean(
                g.genes
                    .iter()
                    .map(|rg| (rg.sign, scaled[rg.gene_id.as_str()].as_slice())),
                x.n_cells(),
            )
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{standardize, ExpressionMatrix};
    use crate::seed;
    use rand_distr::{Distribution, StandardNormal};

    fn matrix(cols: Vec<Vec<f64>>) -> (ExpressionMatrix, StandardizedMatrix) {
        let n = cols[0].len();
        let p = cols.len();
        let x = ExpressionMatrix::from_gene_columns(
            (0..n).map(|i| format!("c{i}")).collect(),
            (0..p).map(|i| format!("g{i}")).collect(),
            cols,
        )
        .unwrap();
        let s = standardize(&x);
        (x, s)
    }

    fn gaussian(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = seed::rng(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    #[test]
    fn perfectly_correlated_pair_merges_at_zero() {
        let g = gaussian(10, 1);
        let scaled: Vec<f64> = g.iter().map(|v| 3.0 * v + 1.0).collect();
        let (_, s) = matrix(vec![g, scaled]);
        let d = build_dendrogram(&GeneSet::positive(vec![0, 1]), &s).unwrap();
        assert_eq!(d.merges.len(), 1);
        assert!(d.merges[0].height.abs() < 1e-12);
    }

    #[test]
    fn uncorrelated_pair_merges_at_one() {
        let (_, s) = matrix(vec![vec![1.0, -1.0, 1.0, -1.0], vec![1.0, 1.0, -1.0, -1.0]]);
        let d = build_dendrogram(&GeneSet::positive(vec![0, 1]), &s).unwrap();
        assert!((d.merges[0].height - 1.0).abs() < 1e-12);
    }

    #[test]
    fn singleton_subset_has_no_merges() {
        let (_, s) = matrix(vec![gaussian(5, 2)]);
        let d = build_dendrogram(&GeneSet::positive(vec![0]), &s).unwrap();
        assert!(d.merges.is_empty());
        assert_eq!(cut_dendrogram(&d, 0.5).len(), 1);
    }

    #[test]
    fn cut_extremes() {
        let (_, s) = matrix((0..6).map(|i| gaussian(12, 10 + i)).collect());
        let d = build_dendrogram(&GeneSet::positive((0..6).collect()), &s).unwrap();
        assert_eq!(cut_dendrogram(&d, 0.0).len(), 6);
        let all = cut_dendrogram(&d, d.max_height().unwrap());
        assert_eq!(all.len(), 1);
        assert_eq!(all[0].genes, (0..6).collect::<Vec<_>>());
    }

    #[test]
    fn mirrored_triplet_representative_is_first_gene() {
        let g = gaussian(20, 3);
        let neg: Vec<f64> = g.iter().map(|v| -v).collect();
        let (x, s) = matrix(vec![g.clone(), neg, g]);
        let group = GeneSet {
            genes: vec![0, 1, 2],
            signs: vec![1, -1, 1],
        };
        let rule = GroupingRule::from_groups(0.1, &[group], &s);
        let z = representatives(&rule, &x).unwrap();
        for (a, b) in z[0].iter().zip(s.gene(0)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn random_group_matches_direct_signed_mean() {
        let cols: Vec<Vec<f64>> = (0..4).map(|i| gaussian(9, 20 + i)).collect();
        let (x, s) = matrix(cols);
        let group = GeneSet {
            genes: vec![0, 1, 2, 3],
            signs: vec![1, -1, -1, 1],
        };
        let rule = GroupingRule::from_groups(0.2, std::slice::from_ref(&group), &s);
        let z = representatives(&rule, &x).unwrap();
        for (c, zc) in z[0].iter().enumerate() {
            let direct = (s.gene(0)[c] - s.gene(1)[c] - s.gene(2)[c] + s.gene(3)[c]) / 4.0;
            assert!((zc - direct).abs() < 1e-12);
        }
        assert!(stats::mean(&z[0]).abs() < 1e-12);
        assert_eq!(z, representatives_standardized(&[group], &s));
    }

    #[test]
    fn missing_gene_is_reported_by_id() {
        let (x, s) = matrix(vec![gaussian(5, 4), gaussian(5, 5)]);
        let rule = GroupingRule::identity(&s);
        let smaller =
            ExpressionMatrix::from_gene_columns(x.cell_ids().to_vec(), vec!["g0".into()], vec![x.gene(0).to_vec()])
                .unwrap();
        match representatives(&rule, &smaller) {
            Err(Error::MissingGenes(ids)) => assert_eq!(ids, vec!["g1".to_string()]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rule_json_has_documented_shape() {
        let (_, s) = matrix(vec![gaussian(5, 6), gaussian(5, 7)]);
        let rule = GroupingRule::identity(&s);
        let v: serde_json::Value = serde_json::to_value(&rule).unwrap();
        assert!(v["threshold"].is_number());
        assert_eq!(v["groups"][1]["genes"][0]["gene_id"], "g1");
        assert_eq!(v["groups"][1]["genes"][0]["sign"], 1);
        assert!(v["standardization"]["g0"]["sd"].is_number());
        let back: GroupingRule = serde_json::from_value(v).unwrap();
        assert_eq!(back, rule);
    }
}
