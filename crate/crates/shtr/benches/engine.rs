use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use shtr::airy::verify_w_constraints;
use shtr::curve::CurveSpec;
use shtr::exact::{rat, rint};
use shtr::exec::Exec;
use shtr::tr::{run, verify_loop_equations};

fn engine(c: &mut Criterion) {
    let curves = [
        ("r3s1", CurveSpec::new(3, 1).shift(1, 1, rint(1)).shift(2, 2, rat(1, 2))),
        ("r5s2", CurveSpec::new(5, 2).shift(1, 1, rint(1))),
    ];
    let mut g = c.benchmark_group("tr-chi3");
    g.sample_size(10);
    for (name, spec) in &curves {
        let curve = spec.validate().unwrap();
        for exec in [Exec::Sequential, Exec::Parallel] {
            g.bench_with_input(BenchmarkId::new(format!("{exec:?}"), name), &curve, |b, c| {
                b.iter(|| run(c, 3, exec).unwrap())
            });
        }
    }
    g.finish();

    let mut g = c.benchmark_group("verify-chi3");
    g.sample_size(10);
    let curve = curves[0].1.validate().unwrap();
    let table = run(&curve, 3, Exec::Parallel).unwrap();
    for exec in [Exec::Sequential, Exec::Parallel] {
        g.bench_function(BenchmarkId::new(format!("{exec:?}"), "loop-equations"), |b| {
            b.iter(|| verify_loop_equations(&table, exec))
        });
        g.bench_function(BenchmarkId::new(format!("{exec:?}"), "w-constraints"), |b| {
            b.iter(|| verify_w_constraints(&table, 4, 3, exec))
        });
    }
    g.finish();
}

criterion_group!(benches, engine);
criterion_main!(benches);
