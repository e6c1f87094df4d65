use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use multiplicity::dataset::orthonormalize;
use multiplicity::fairness::{group_rate_extremes, RateDirection};
use multiplicity::index_model::MultiTarget;
use multiplicity::oracle::{angle_sweep_single, simplex_sweep_k2, SweepQuery};
use multiplicity_bench::{dataset, ensemble, single_target};
use std::hint::black_box;

fn bench_orthonormalize(c: &mut Criterion) {
    let ds = dataset(2000, 20, 1, 3);
    c.bench_function("orthonormalize/2000x20", |b| b.iter(|| orthonormalize(black_box(&ds)).unwrap()));
}

fn bench_single(c: &mut Criterion) {
    let mut g = c.benchmark_group("flip_search_single");
    g.sample_size(10);
    for n in [100, 400] {
        let p = single_target(n, 4, 0.05, n / 10);
        g.bench_with_input(BenchmarkId::from_parameter(n), &p, |b, p| b.iter(|| p.flip_search_all()));
    }
    g.finish();
}

fn bench_multi(c: &mut Criterion) {
    let mut g = c.benchmark_group("flip_search_multi");
    g.sample_size(10);
    for n in [100, 200] {
        let (ens, _) = ensemble(n, 3);
        let mt = MultiTarget::new(ens, n / 10).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(n), &mt, |b, mt| b.iter(|| mt.flip_search_all()));
    }
    g.finish();
}

fn bench_group(c: &mut Criterion) {
    let mut g = c.benchmark_group("group_rate_extremes");
    g.sample_size(10);
    for n in [60, 120] {
        let (ens, groups) = ensemble(n, 2);
        g.bench_with_input(BenchmarkId::from_parameter(n), &(ens, groups), |b, (ens, groups)| {
            b.iter(|| group_rate_extremes(ens, groups, "a", n / 10, RateDirection::Both).unwrap())
        });
    }
    g.finish();
}

fn bench_oracles(c: &mut Criterion) {
    let p = single_target(200, 1, 0.1, 20);
    c.bench_function("angle_sweep_single/200", |b| {
        b.iter(|| angle_sweep_single(p.design(), p.ball(), black_box(17)).unwrap())
    });
    let (ens, _) = ensemble(200, 2);
    c.bench_function("simplex_sweep_k2/200", |b| {
        b.iter(|| simplex_sweep_k2(&ens.predictions, 20, &SweepQuery::Rank(black_box(17))).unwrap())
    });
}

criterion_group!(benches, bench_orthonormalize, bench_single, bench_multi, bench_group, bench_oracles);
criterion_main!(benches);
