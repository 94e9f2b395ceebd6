use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use corrgroup::enet::{fit_path, lambda_max, lambda_path};
use corrgroup::hcluster::build_dendrogram;
use corrgroup::precluster::{kmeans_init, modified_kmeans};
use corrgroup::{auc, standardize, GeneSet, PathOptions};
use corrgroup_bench::{blocked_matrix, columns, labels_from_first_gene};

fn dendrogram(c: &mut Criterion) {
    let mut group = c.benchmark_group("dendrogram");
    for p in [100, 400, 1000] {
        let std = standardize(&blocked_matrix(200, p, 1));
        let set = GeneSet::positive((0..p).collect());
        group.bench_with_input(BenchmarkId::from_parameter(p), &p, |b, _| {
            b.iter(|| build_dendrogram(black_box(&set), &std).unwrap())
        });
    }
    group.finish();
}

fn signed_kmeans(c: &mut Criterion) {
    let std = standardize(&blocked_matrix(300, 1200, 2));
    let set = GeneSet::positive((0..1200).collect());
    let init = kmeans_init(&std, &set, 10, 3).unwrap();
    c.bench_function("kmeans_init/1200", |b| {
        b.iter(|| kmeans_init(&std, black_box(&set), 10, 3).unwrap())
    });
    c.bench_function("modified_kmeans/1200", |b| {
        b.iter(|| modified_kmeans(&std, black_box(&set), 10, &init, 100).unwrap())
    });
}

fn enet_path(c: &mut Criterion) {
    let mut group = c.benchmark_group("enet_path");
    group.sample_size(10);
    for p in [200, 1200] {
        let x = blocked_matrix(300, p, 4);
        let y = labels_from_first_gene(&x);
        let cols = columns(&x);
        let lambdas = lambda_path(lambda_max(&cols, &y, 0.5).unwrap(), 1e-3, 50);
        group.bench_with_input(BenchmarkId::from_parameter(p), &p, |b, _| {
            b.iter(|| fit_path(black_box(&cols), &y, 0.5, &lambdas, &PathOptions::default()).unwrap())
        });
    }
    group.finish();
}

fn auc_ranks(c: &mut Criterion) {
    let x = blocked_matrix(5000, 2, 5);
    let y = labels_from_first_gene(&x);
    let q = x.gene(1).to_vec();
    c.bench_function("auc/5000", |b| b.iter(|| auc(black_box(&y), black_box(&q)).unwrap()));
}

criterion_group!(benches, dendrogram, signed_kmeans, enet_path, auc_ranks);
criterion_main!(benches);
