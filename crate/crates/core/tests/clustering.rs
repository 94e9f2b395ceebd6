mod common;

use std::collections::BTreeSet;

use common::{factor_matrix, gaussian, matrix, naive_average_linkage, pearson_two_pass};
use corrgroup::hcluster::{build_dendrogram, cut_all, cut_dendrogram};
use corrgroup::precluster::{iterative_split, kmeans_init, modified_kmeans};
use corrgroup::{seed, standardize, GeneSet, SplitConfig};
use rand::seq::SliceRandom;
use rand::Rng;

fn as_set(v: &[usize]) -> BTreeSet<usize> {
    v.iter().copied().collect()
}

#[test]
fn six_gene_dendrogram_matches_brute_force() {
    for s in 0..20 {
        let mut rng = seed::rng(s);
        let x = factor_matrix(30, 6, 2, &mut rng);
        let std = standardize(&x);
        let signs: Vec<i8> = (0..6).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect();
        let set = GeneSet {
            genes: (0..6).collect(),
            signs: signs.clone(),
        };
        let d: Vec<Vec<f64>> = (0..6)
            .map(|a| {
                (0..6)
                    .map(|b| {
                        let r = pearson_two_pass(x.gene(a), x.gene(b));
                        1.0 - f64::from(signs[a] * signs[b]) * r
                    })
                    .collect()
            })
            .collect();
        let oracle = naive_average_linkage(&d);
        let dendro = build_dendrogram(&set, &std).unwrap();
        assert_eq!(dendro.merges.len(), 5);
        for (o, m) in oracle.iter().zip(&dendro.merges) {
            let (l, r) = (as_set(&dendro.members(m.left)), as_set(&dendro.members(m.right)));
            let (ol, or) = (as_set(&o.0), as_set(&o.1));
            assert!((l == ol && r == or) || (l == or && r == ol), "seed {s}");
            assert!((o.2 - m.height).abs() < 1e-8);
        }

        // cutting between the first two heights keeps only the first pair
        let (h0, h1) = (oracle[0].2, oracle[1].2);
        if h1 > h0 {
            let groups = cut_dendrogram(&dendro, 0.5 * (h0 + h1));
            let multi: Vec<BTreeSet<usize>> = groups
                .iter()
                .filter(|g| g.len() > 1)
                .map(|g| as_set(&g.genes))
                .collect();
            let mut first = as_set(&oracle[0].0);
            first.extend(&oracle[0].1);
            assert_eq!(multi, vec![first]);
        }
    }
}

#[test]
fn heights_never_decrease_towards_the_root() {
    for s in 0..30 {
        let mut rng = seed::rng(100 + s);
        let x = factor_matrix(20, 25, 3, &mut rng);
        let std = standardize(&x);
        let dendro = build_dendrogram(&GeneSet::positive((0..25).collect()), &std).unwrap();
        let leaves = dendro.n_leaves();
        for m in &dendro.merges {
            for child in [m.left, m.right] {
                if child >= leaves {
                    assert!(dendro.merges[child - leaves].height <= m.height + 1e-12);
                }
            }
        }
    }
}

#[test]
fn large_random_set_is_split_below_the_cap() {
    let mut rng = seed::rng(7);
    let cols: Vec<Vec<f64>> = (0..2500).map(|_| gaussian(12, &mut rng)).collect();
    let std = standardize(&matrix(cols));
    let parts = iterative_split(&std, &SplitConfig::default(), 3).unwrap();
    let mut seen = vec![false; 2500];
    for s in &parts.subsets {
        assert!(s.len() < 1000);
        for &g in &s.genes {
            assert!(!seen[g], "gene {g} appears twice");
            seen[g] = true;
        }
    }
    assert!(seen.iter().all(|&b| b));
}

#[test]
fn groups_never_span_subsets() {
    let mut rng = seed::rng(11);
    let x = factor_matrix(15, 40, 2, &mut rng);
    let std = standardize(&x);
    let halves = [
        GeneSet::positive((0..20).collect()),
        GeneSet::positive((20..40).collect()),
    ];
    let dendros: Vec<_> = halves.iter().map(|h| build_dendrogram(h, &std).unwrap()).collect();
    for c in [0.0, 0.2, 0.8, 2.0] {
        let groups = cut_all(&dendros, c);
        assert_eq!(groups.iter().map(GeneSet::len).sum::<usize>(), 40);
        for g in &groups {
            let low = g.genes.iter().filter(|&&j| j < 20).count();
            assert!(low == 0 || low == g.len());
        }
    }
    // at the top every subset collapses to one group, never to fewer
    assert_eq!(cut_all(&dendros, 2.0).len(), 2);
}

#[test]
fn single_cluster_signs_follow_the_signed_mean() {
    let mut rng = seed::rng(21);
    let x = factor_matrix(30, 12, 1, &mut rng);
    let std = standardize(&x);
    let set = GeneSet::positive((0..12).collect());
    let c = modified_kmeans(&std, &set, 1, &[0; 12], 100).unwrap();
    assert_eq!(c.n_clusters(), 1);
    let center = &c.centers[0];
    for (i, &g) in set.genes.iter().enumerate() {
        let r = pearson_two_pass(center, x.gene(g));
        assert_eq!(c.signs[i], if r < 0.0 { -1 } else { 1 });
    }
}

/// 3 mutually orthogonal centered bases, 10 scaled copies of each with
/// random signs, shuffled. Returns the matrix and the (block, sign) layout.
fn planted(rng: &mut impl Rng) -> (corrgroup::StandardizedMatrix, Vec<(usize, i8)>) {
    let n = 16;
    let mut bases: Vec<Vec<f64>> = Vec::new();
    while bases.len() < 3 {
        let mut v = gaussian(n, rng);
        let mean = v.iter().sum::<f64>() / n as f64;
        v.iter_mut().for_each(|x| *x -= mean);
        for b in &bases {
            let proj: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= proj * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        bases.push(v);
    }
    let mut layout: Vec<(usize, i8)> = (0..30)
        .map(|i| (i / 10, if rng.random::<bool>() { 1 } else { -1 }))
        .collect();
    layout.shuffle(rng);
    let cols = layout
        .iter()
        .map(|&(b, s)| {
            let scale = f64::from(s) * rng.random_range(0.2..5.0);
            bases[b].iter().map(|v| scale * v - 1.0).collect()
        })
        .collect();
    (standardize(&matrix(cols)), layout)
}

fn assert_recovered(c: &corrgroup::SignedClustering, layout: &[(usize, i8)]) {
    assert_eq!(c.n_clusters(), 3);
    for i in 0..30 {
        for j in 0..30 {
            let same_block = layout[i].0 == layout[j].0;
            assert_eq!(same_block, c.membership[i] == c.membership[j]);
            if same_block {
                assert_eq!(layout[i].1 * layout[j].1, c.signs[i] * c.signs[j]);
            }
        }
    }
}

#[test]
fn planted_sign_blocks_from_kmeans_init() {
    for s in 0..30 {
        let mut rng = seed::rng(500 + s);
        let (std, layout) = planted(&mut rng);
        let set = GeneSet::positive((0..30).collect());
        let init = kmeans_init(&std, &set, 3, s).unwrap();
        assert_recovered(&modified_kmeans(&std, &set, 3, &init, 100).unwrap(), &layout);
    }
}

#[test]
fn planted_sign_blocks_from_arbitrary_init() {
    for s in 0..30 {
        let mut rng = seed::rng(800 + s);
        let (std, layout) = planted(&mut rng);
        let set = GeneSet::positive((0..30).collect());
        let init: Vec<usize> = (0..30).map(|_| rng.random_range(0..3)).collect();
        assert_recovered(&modified_kmeans(&std, &set, 3, &init, 100).unwrap(), &layout);
    }
}
