use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use hocov::covariance::build_covariance;
use hocov::criteria::{evaluate, nha_zubairy};
use hocov::dynamics::{build_hamiltonian, propagate, InteractionSpec};
use hocov::fock::ModeLayout;
use hocov::quadratures::commutator_residual;
use hocov_bench::Fixture;

fn hamiltonian(c: &mut Criterion) {
    let mut group = c.benchmark_group("hamiltonian");
    for dims in [[16, 20, 39], [32, 40, 79]] {
        let layout = ModeLayout::three_mode(dims[0], dims[1], dims[2]).unwrap();
        let spec = InteractionSpec::new(1, 2, layout);
        group.bench_with_input(BenchmarkId::from_parameter(format!("{dims:?}")), &spec, |b, spec| {
            b.iter(|| build_hamiltonian(black_box(spec)).unwrap())
        });
    }
    group.finish();
}

fn krylov(c: &mut Criterion) {
    let fx = Fixture::three_mode_small();
    let t = fx.config.evolution_config().time_of(0.02);
    c.bench_function("propagate xi step 0.02", |b| {
        b.iter(|| propagate(black_box(&fx.initial), &fx.hamiltonian, t, fx.config.tolerance).unwrap())
    });
}

fn covariance(c: &mut Criterion) {
    let fx = Fixture::three_mode_small();
    let mut group = c.benchmark_group("covariance");
    for n in 1..=3 {
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, &n| {
            b.iter(|| build_covariance(black_box(&fx.evolved), n, 1, 2).unwrap())
        });
    }
    group.finish();
}

fn criteria(c: &mut Criterion) {
    let fx = Fixture::three_mode_small();
    let covs: Vec<_> = (1..=3).map(|n| fx.covariance(n)).collect();
    c.bench_function("evaluate hierarchy", |b| {
        b.iter(|| covs.iter().map(|cov| evaluate(black_box(cov), None).nu_minus).sum::<f64>())
    });
    c.bench_function("nha-zubairy", |b| b.iter(|| nha_zubairy(black_box(&fx.evolved)).unwrap()));
}

fn commutators(c: &mut Criterion) {
    c.bench_function("exact commutator m=9", |b| b.iter(|| commutator_residual(black_box(9), 35).unwrap()));
}

criterion_group!(benches, hamiltonian, krylov, covariance, criteria, commutators);
criterion_main!(benches);
