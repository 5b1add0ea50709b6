use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fracweyl::discretize::{assemble_dirichlet_with, kernel_weights};
use fracweyl::domains::Domain;
use fracweyl::field::ScalarField;
use fracweyl::snumbers::{mollification_study, snumber_suite};
use fracweyl::Execution;

const POLICIES: [Execution; 2] = [Execution::Sequential, Execution::Parallel];

fn name(exec: Execution) -> &'static str {
    match exec {
        Execution::Sequential => "sequential",
        Execution::Parallel => "parallel",
    }
}

fn assembly(c: &mut Criterion) {
    let domain = Domain::disk([0.0, 0.0], 1.0).unwrap();
    let h = 1.0 / 24.0;
    let grid = Arc::new(domain.grid(h).unwrap());
    let kernel = kernel_weights(2, 0.5, h, grid.lattice_diameter()).unwrap();
    let phi: ScalarField = "sine:2,0.5,3".parse().unwrap();
    let mut group = c.benchmark_group("assemble_disk_coefficient");
    group.sample_size(10);
    for exec in POLICIES {
        group.bench_function(BenchmarkId::from_parameter(name(exec)), |b| {
            b.iter(|| assemble_dirichlet_with(exec, &kernel, grid.clone(), Some(&phi)).unwrap())
        });
    }
    group.finish();
}

fn suite(c: &mut Criterion) {
    let mut group = c.benchmark_group("snumber_suite_64_seeds");
    group.sample_size(10);
    for exec in POLICIES {
        group.bench_function(BenchmarkId::from_parameter(name(exec)), |b| {
            b.iter(|| snumber_suite(exec, 7, 64).unwrap())
        });
    }
    group.finish();
}

fn mollify(c: &mut Criterion) {
    let domain = Domain::interval(0.0, 1.0).unwrap();
    let phi: ScalarField = "kink:2,1,0.5".parse().unwrap();
    let mut group = c.benchmark_group("mollification_study");
    group.sample_size(10);
    for exec in POLICIES {
        group.bench_function(BenchmarkId::from_parameter(name(exec)), |b| {
            b.iter(|| mollification_study(exec, &domain, 0.5, &phi, &[2, 4, 8, 16], 1.0 / 256.0).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, assembly, suite, mollify);
criterion_main!(benches);
