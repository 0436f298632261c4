use std::hint::black_box;

use composite_opt::network;
use composite_opt::subproblem::{self, InnerGdOptions, StepRule};
use composite_opt::trainer::{self, Algorithm, TrainConfig};
use composite_opt_bench::Fixture;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

const WIDTHS: [usize; 3] = [8, 16, 32];

fn bench_jacobians(c: &mut Criterion) {
    let mut group = c.benchmark_group("jacobian_stack");
    for hidden in WIDTHS {
        let f = Fixture::new(8, 3, hidden, 0.1);
        group.bench_with_input(BenchmarkId::from_parameter(f.dim()), &f, |b, f| {
            b.iter(|| network::jacobian_stack(&f.spec, black_box(&f.weights), &f.dataset.inputs).unwrap())
        });
    }
    group.finish();
}

fn bench_assemble_and_solve(c: &mut Criterion) {
    let mut group = c.benchmark_group("subproblem");
    for hidden in WIDTHS {
        let f = Fixture::new(8, 3, hidden, 0.1);
        let input = f.subproblem();
        let system = subproblem::assemble(&input).unwrap();
        let d = f.dim();
        group.bench_with_input(BenchmarkId::new("assemble", d), &input, |b, input| {
            b.iter(|| subproblem::assemble(black_box(input)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("closed_form", d), &system, |b, system| {
            b.iter(|| subproblem::solve_closed_form(black_box(system)).unwrap())
        });
        for (name, rule) in [("inner_gd_power", StepRule::PowerIteration), ("inner_gd_analytic", StepRule::Analytic)] {
            let opts = InnerGdOptions { step_rule: rule, warm_start: None };
            group.bench_with_input(BenchmarkId::new(name, d), &system, |b, system| {
                b.iter(|| subproblem::solve_inner_gd_with(&input, black_box(system), f.eps, 1_000_000, &opts).unwrap())
            });
        }
    }
    group.finish();
}

fn bench_training(c: &mut Criterion) {
    let mut group = c.benchmark_group("train");
    group.sample_size(10);
    let f = Fixture::new(4, 2, 12, 0.1);
    for alg in [Algorithm::ClosedForm, Algorithm::InnerGd] {
        let cfg = TrainConfig::new(0.1, 1.0, 1.0, 0.2, alg, 0);
        group.bench_function(format!("{alg:?}"), |b| {
            b.iter(|| trainer::run(&cfg, &f.spec, &f.dataset, black_box(&f.weights)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_jacobians, bench_assemble_and_solve, bench_training);
criterion_main!(benches);
