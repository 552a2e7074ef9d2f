//! Kernel benchmarks: the contraction route against the fused single pass,
//! and the rayon batch map against its sequential fallback.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::Rng;
use std::hint::black_box;

use permtensor::equilinear::EquivariantMap;
use permtensor::gnn::{GnnModel, InitScheme, Mode, Skeleton};
use permtensor::par;
use permtensor::rng::{self, Stream};
use permtensor::tensor::{Activation, DenseTensor};

fn random_map(k: usize, l: usize, seed: u64) -> EquivariantMap {
    let mut r = rng::stream(seed, Stream::Check, k as u64, l as u64);
    let len = EquivariantMap::basis_len(k, l).unwrap();
    EquivariantMap::new(k, l, (0..len).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap()
}

fn routes(c: &mut Criterion) {
    let mut group = c.benchmark_group("equivariant_apply");
    for &(k, l, n) in &[(2, 2, 10), (2, 3, 10), (3, 0, 10), (3, 1, 10)] {
        let map = random_map(k, l, 7);
        let x =
            DenseTensor::random_uniform(k, n, 0.0, 1.0, &mut rng::stream(1, Stream::Check, 0, 0));
        let id = format!("{k}to{l}_n{n}");
        group.bench_with_input(BenchmarkId::new("contraction", &id), &x, |b, x| {
            b.iter(|| map.apply(black_box(x)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("fused", &id), &x, |b, x| {
            b.iter(|| map.apply_fused(black_box(x)).unwrap())
        });
    }
    group.finish();
}

fn batch(c: &mut Criterion) {
    let sk = Skeleton::uniform(2, Mode::Invariant, Activation::Sigmoid, 2, 8);
    let model = GnnModel::init_params(&sk, 0, InitScheme::UniformScaled).unwrap();
    let mut r = rng::stream(2, Stream::Check, 0, 0);
    let graphs: Vec<DenseTensor> = (0..32)
        .map(|_| DenseTensor::random_uniform(2, 10, 0.0, 1.0, &mut r))
        .collect();
    let u = DenseTensor::scalar(1.0, 10);
    let mut group = c.benchmark_group("batch_gradient");
    group.bench_function("par_map", |b| {
        b.iter(|| par::map(&graphs, |g| model.gradient(g, &u).unwrap()))
    });
    group.bench_function("sequential", |b| {
        b.iter(|| par::map_seq(&graphs, |g| model.gradient(g, &u).unwrap()))
    });
    group.finish();
}

criterion_group!(benches, routes, batch);
criterion_main!(benches);
