use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rspin_core::correlators::{fit_extended_primaries, Choice, Evaluator, OpenSource, Sector};
use rspin_core::verify::{pipeline_a, recursion_base};
use rspin_core::{solve_l, SolveOptions};

fn solve(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve_l");
    group.sample_size(10);
    for (r, w) in [(2, 8), (3, 8), (4, 8)] {
        group.bench_with_input(BenchmarkId::new(format!("r{r}"), w), &(r, w), |b, &(r, w)| {
            b.iter(|| solve_l(r, w, SolveOptions::default()).unwrap())
        });
    }
    group.finish();
}

fn wave_function(c: &mut Criterion) {
    let mut group = c.benchmark_group("wave_function");
    group.sample_size(10);
    for (r, w) in [(2, 8), (3, 8)] {
        let sol = solve_l(r, w, SolveOptions::default()).unwrap();
        group.bench_with_input(BenchmarkId::new(format!("r{r}"), w), &sol, |b, sol| {
            b.iter(|| {
                let mut s = sol.clone();
                s.solve_wave_function().unwrap();
                s
            })
        });
    }
    group.finish();
}

fn recursion(c: &mut Criterion) {
    let mut group = c.benchmark_group("recursion");
    for (r, w) in [(2, 10), (3, 9)] {
        let a = pipeline_a(r, w, None).unwrap();
        let fit = fit_extended_primaries(&a.table, r).unwrap();
        let base = recursion_base(&a.table, &fit).unwrap();
        let keys: Vec<_> = a.table.keys().filter(|k| k.sector == Sector::Open).cloned().collect();
        group.bench_with_input(BenchmarkId::new(format!("r{r}"), w), &keys, |b, keys| {
            b.iter(|| {
                let mut ev = Evaluator::new(r, &base, OpenSource::Recursion, Choice::First);
                for k in keys {
                    ev.value(k).unwrap();
                }
            })
        });
    }
    group.finish();
}

criterion_group!(benches, solve, wave_function, recursion);
criterion_main!(benches);
