use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use amod_bench::city;
use amod_core::dispatch::{dispatch_baseline, dispatch_eat, DispatchConfig, DispatchContext};
use amod_core::fleet::Strategy;
use amod_core::road::TrafficState;

/// The call sits in one corner and every vehicle in the opposite one, so
/// expansion has to walk the whole zone graph.
fn far_call(c: &mut Criterion) {
    let traffic = TrafficState::free_flow();
    let f = city(40, 5);
    let call = f.corner_call();
    let mut group = c.benchmark_group("dispatch");
    for size in [10, 100, 500] {
        let fleet = f.corner_fleet(size);
        let ctx = DispatchContext { fleet: &fleet, node_zone: &f.node_zone, net: &f.network, traffic: &traffic, now_s: 0.0 };
        let adjacency = f.zones.initial_adjacency();
        group.bench_with_input(BenchmarkId::new("expand", size), &ctx, |b, ctx| {
            let cfg = DispatchConfig::new(Strategy::Sss, true);
            b.iter(|| {
                let mut sched = adjacency.clone();
                dispatch_eat(&call, *ctx, &mut sched, &cfg)
            })
        });
        group.bench_with_input(BenchmarkId::new("one-ring", size), &ctx, |b, ctx| {
            let cfg = DispatchConfig::new(Strategy::Sss, false);
            b.iter(|| dispatch_baseline(&call, *ctx, &adjacency, &cfg))
        });
    }
    group.finish();
}

criterion_group!(benches, far_call);
criterion_main!(benches);
