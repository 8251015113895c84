use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mflang_core::dynamics::step_overdamped;
use mflang_core::gibbs::gibbs_map;
use mflang_core::measures::{sample_gaussian_cloud, standard_normal_rows, Lane, RngStream};
use mflang_core::wasserstein::w2_empirical_assignment;
use mflang_core::{EmpiricalMeasure, EnergySpec, GridMeasure1D, OverdampedState, Potential};

fn cloud(id: u64, n: usize, dim: usize) -> EmpiricalMeasure {
    let mut rng = RngStream::new(1, id);
    sample_gaussian_cloud(n, dim, &vec![0.0; dim], 1.0, &mut rng).unwrap()
}

fn spec() -> EnergySpec {
    EnergySpec::two_body(Potential::quadratic(2.0), Potential::cosine(0.1))
}

fn drift_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("overdamped_step");
    for n in [256, 1024, 4096] {
        let state = OverdampedState {
            t: 0.0,
            cloud: cloud(0, n, 1),
        };
        let noise = standard_normal_rows(1, 0, Lane::Noise, n, 1);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| step_overdamped(&state, &spec(), 1e-3, &noise).unwrap())
        });
    }
    group.finish();
}

fn assignment(c: &mut Criterion) {
    let mut group = c.benchmark_group("w2_assignment_d2");
    group.sample_size(10);
    for n in [64, 256, 1024] {
        let (a, b) = (cloud(1, n, 2), cloud(2, n, 2));
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |bch, _| {
            bch.iter(|| w2_empirical_assignment(&a, &b).unwrap())
        });
    }
    group.finish();
}

fn gibbs(c: &mut Criterion) {
    let mu = GridMeasure1D::gaussian(-10.0, 10.0, 2001, 0.5, 1.0).unwrap();
    let spec = spec();
    c.bench_function("gibbs_map_m2001", |b| {
        b.iter(|| gibbs_map(&spec, &mu).unwrap())
    });
}

criterion_group!(benches, drift_step, assignment, gibbs);
criterion_main!(benches);
