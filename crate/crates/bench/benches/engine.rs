use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use polycap::{
    hardy_norm, potential, solve_capacity, Mode, SolverOptions, TargetSet, TreeSpec, Weight,
};
use polycap_bench::fixture;

fn sweeps(c: &mut Criterion) {
    let mut g = c.benchmark_group("potential");
    for (d, n) in [(1, 12), (2, 6), (2, 8), (3, 4)] {
        let (_, w, mu) = fixture(d, n, 32);
        g.bench_with_input(
            BenchmarkId::new("sweep", format!("d{d}n{n}")),
            &mu,
            |b, mu| b.iter(|| potential(mu, &w, Mode::Sweep).unwrap()),
        );
    }
    let (_, w, mu) = fixture(2, 5, 32);
    g.bench_function("kernel/d2n5", |b| {
        b.iter(|| potential(&mu, &w, Mode::Kernel).unwrap())
    });
    g.finish();
}

fn capacity(c: &mut Criterion) {
    let mut g = c.benchmark_group("capacity");
    g.sample_size(10);
    for n in [6, 10] {
        let t = TreeSpec::uniform(1, n).unwrap();
        let e = TargetSet::full_boundary(&t);
        g.bench_function(format!("full-boundary/d1n{n}"), |b| {
            b.iter(|| solve_capacity(&t, &e, &Weight::unit(1), &SolverOptions::default()).unwrap())
        });
    }
    let t = TreeSpec::uniform(2, 5).unwrap();
    let e = TargetSet::full_boundary(&t);
    g.bench_function("full-boundary/d2n5", |b| {
        b.iter(|| solve_capacity(&t, &e, &Weight::unit(2), &SolverOptions::default()).unwrap())
    });
    g.finish();
}

fn hardy(c: &mut Criterion) {
    let mut g = c.benchmark_group("hardy-norm");
    g.sample_size(10);
    for n in [4, 6] {
        let (_, w, mu) = fixture(2, n, 64);
        g.bench_function(format!("d2n{n}"), |b| {
            b.iter(|| hardy_norm(&mu, &w, 1e-9).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, sweeps, capacity, hardy);
criterion_main!(benches);
