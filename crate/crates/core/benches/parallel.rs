use std::collections::BTreeMap;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hyposde::estimate::{contrast, simulate_design, ContrastMethod, Design};
use hyposde::expansion::{iterated_density_grid, DensityBase, IterOptions};
use hyposde::model::builtin_model;
use hyposde::par::Execution;
use hyposde::scheme::{simulate_replicates, SchemeId};
use hyposde::variates::{catalogue, moment_suite, SeededRng};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn bench_contrast(c: &mut Criterion) {
    let mut group = c.benchmark_group("contrast");
    group.sample_size(10);
    for name in ["fitzhugh_nagumo", "jansen_rit"] {
        let model = builtin_model(name, &BTreeMap::new()).unwrap();
        let design_name = if name == "jansen_rit" { "jr1" } else { "fn1" };
        let mut design = Design::named(design_name).unwrap();
        design.n = 4000;
        let theta = model.default_theta();
        let obs = simulate_design(&model, &design, &model.default_x0(), &theta, &mut SeededRng::new(1, 0)).unwrap();
        for method in ContrastMethod::ALL {
            for (mode, exec) in MODES {
                group.bench_with_input(BenchmarkId::new(format!("{name}/{method}"), mode), &exec, |b, &exec| {
                    b.iter(|| contrast(exec, &model, &obs, black_box(&theta), method).unwrap())
                });
            }
        }
    }
    group.finish();
}

fn bench_moments(c: &mut Criterion) {
    let mut group = c.benchmark_group("moment_suite");
    group.sample_size(10);
    let moments = catalogue(2);
    for (mode, exec) in MODES {
        group.bench_with_input(BenchmarkId::new("d_r=2,n=200000", mode), &exec, |b, &exec| {
            b.iter(|| moment_suite(exec, &moments, 0.5, 2, 200_000, black_box(3)).unwrap())
        });
    }
    group.finish();
}

fn bench_iterated_density(c: &mut Criterion) {
    let mut group = c.benchmark_group("iterated_density");
    group.sample_size(10);
    let model = builtin_model("ou", &BTreeMap::new()).unwrap();
    let theta = model.default_theta();
    let opts = IterOptions::default();
    for base in [DensityBase::I, DensityBase::II] {
        for (mode, exec) in MODES {
            group.bench_with_input(BenchmarkId::new(format!("ou/{base:?}/M=8"), mode), &exec, |b, &exec| {
                b.iter(|| iterated_density_grid(exec, &model, 0.0, black_box(&theta), 0.5, 8, base, &opts).unwrap())
            });
        }
    }
    group.finish();
}

fn bench_replicate_paths(c: &mut Criterion) {
    let mut group = c.benchmark_group("replicate_paths");
    group.sample_size(10);
    let model = builtin_model("fitzhugh_nagumo", &BTreeMap::new()).unwrap();
    let theta = model.default_theta();
    let x0 = model.default_x0();
    for (mode, exec) in MODES {
        group.bench_with_input(BenchmarkId::new("fn/weak2_hypo/8x2000", mode), &exec, |b, &exec| {
            b.iter(|| {
                simulate_replicates(exec, &model, SchemeId::Weak2Hypo, &x0, black_box(&theta), 1e-3, 2000, 10, 5, 8).unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, bench_contrast, bench_moments, bench_iterated_density, bench_replicate_paths);
criterion_main!(benches);
