use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use jumpeuler_bench::fine_grid;
use jumpeuler_core::{
    aggregate_to_rare, simulate_coupled_pair_with, simulate_terminal_with, Multipliers, NoiseLayout, Preset,
    SchemeParams, TrajectoryKey,
};

fn terminal(c: &mut Criterion) {
    let mut group = c.benchmark_group("terminal");
    let n = 1000;
    group.throughput(Throughput::Elements(n as u64));
    for (preset, layout) in [
        (Preset::OuJump, NoiseLayout::Factored),
        (Preset::OuJump, NoiseLayout::Full),
        (Preset::Merton, NoiseLayout::Factored),
    ] {
        let model = preset.model();
        for m in [10, 100] {
            let params = SchemeParams::for_model(&model, m, n);
            let id = BenchmarkId::new(format!("{}/{layout:?}", preset.name()), m);
            let mut l = 0u64;
            group.bench_function(id, |b| {
                b.iter(|| {
                    l += 1;
                    simulate_terminal_with(&model, &params, TrajectoryKey::new(1, l), layout).unwrap()
                })
            });
        }
    }
    group.finish();
}

fn coupled_pair(c: &mut Criterion) {
    let mut group = c.benchmark_group("coupled_pair");
    let model = Preset::OuJump.model();
    let mult = Multipliers::default();
    let (m, n) = (10, 20);
    group.throughput(Throughput::Elements((n * mult.steps) as u64));
    let params = SchemeParams::for_model(&model, m, n);
    for layout in [NoiseLayout::Factored, NoiseLayout::Full] {
        let mut l = 0u64;
        group.bench_function(format!("{layout:?}"), |b| {
            b.iter(|| {
                l += 1;
                simulate_coupled_pair_with(&model, &params, mult, TrajectoryKey::new(2, l), layout).unwrap()
            })
        });
    }
    group.finish();
}

fn aggregation(c: &mut Criterion) {
    let mut group = c.benchmark_group("aggregate_to_rare");
    for (dims, steps) in [(5, 100), (100, 10_000)] {
        let grid = fine_grid(dims, steps, 3);
        group.throughput(Throughput::Elements((dims * steps) as u64));
        group.bench_function(format!("{steps}x{dims}"), |b| {
            b.iter(|| aggregate_to_rare(&grid, 10, dims / 2).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, terminal, coupled_pair, aggregation);
criterion_main!(benches);
