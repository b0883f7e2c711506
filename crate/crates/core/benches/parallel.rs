use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use ctlab::eulerian::solve_fv;
use ctlab::flow::FlowOptions;
use ctlab::lagrangian::{solve_pushforward, solve_representation, InitialData};
use ctlab::par;
use ctlab::scenarios::builtin;

fn solvers(c: &mut Criterion) {
    let s = builtin("rotation", None).unwrap();
    let u0: InitialData = s.u0.clone().into();
    let grid = s.grid(128, 0.5).unwrap();
    let opts = FlowOptions::new(0.02, s.domain).allow_exit();
    let pools = [("1 thread", Some(1)), ("default pool", None)];
    let mut group = c.benchmark_group("rotation n=128");
    group.sample_size(10);
    for (label, workers) in pools {
        let run = |f: &(dyn Fn() + Sync)| match workers {
            Some(w) => par::with_workers(w, f),
            None => f(),
        };
        group.bench_function(BenchmarkId::new("representation", label), |bench| {
            bench.iter(|| run(&|| drop(solve_representation(&u0, &s.b, &s.c, 1.0, &grid, &opts).unwrap())))
        });
        group.bench_function(BenchmarkId::new("pushforward", label), |bench| {
            bench.iter(|| run(&|| drop(solve_pushforward(&u0, &s.b, &s.c, 1.0, &grid, 2, &opts).unwrap())))
        });
        group.bench_function(BenchmarkId::new("finite volumes", label), |bench| {
            bench.iter(|| run(&|| drop(solve_fv(&u0, &s.b, &s.c, &grid, 0.9).unwrap())))
        });
    }
    group.finish();
}

criterion_group!(benches, solvers);
criterion_main!(benches);
