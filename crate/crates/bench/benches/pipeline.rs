use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use edfscope::{run_dyps, run_scheduleak_baseline, simulate, TieBreak, VariationConfig};
use edfscope_bench::fixture;

fn bench_simulate(c: &mut Criterion) {
    let mut g = c.benchmark_group("simulate");
    g.sample_size(20);
    for n in [5usize, 15] {
        let (ts, _, horizon) = fixture(n, 1, 7);
        let var = VariationConfig::default().with_seed(1);
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| simulate(&ts, horizon, &var, TieBreak::SeededRandom).unwrap())
        });
    }
    g.finish();
}

fn bench_attack(c: &mut Criterion) {
    let mut g = c.benchmark_group("attack");
    let (ts, w, horizon) = fixture(9, 10, 7);
    let trace = simulate(&ts, horizon, &VariationConfig::default().with_seed(1), TieBreak::SeededRandom).unwrap();
    g.bench_function("dyps_10lcm", |b| b.iter(|| run_dyps(&trace, &ts, w, None).unwrap()));
    g.bench_function("scheduleak_10lcm", |b| {
        b.iter(|| run_scheduleak_baseline(&trace, &ts, w).unwrap())
    });
    g.finish();
}

criterion_group!(benches, bench_simulate, bench_attack);
criterion_main!(benches);
