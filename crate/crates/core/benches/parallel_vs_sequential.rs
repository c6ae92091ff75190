use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use warmpool::config::{PoolConfig, Saturation, SimConfig};
use warmpool::experiment::{build_set, SetSpec, SystemSpec, TraceSet, TraceSource};
use warmpool::par;
use warmpool::policies::{Policy, PolicyKind};
use warmpool::sim;
use warmpool::trace::SynthParams;
use warmpool::workload::WorkloadCatalog;

fn sets(n: u64) -> Vec<TraceSet> {
    let catalog = WorkloadCatalog::standard();
    let source = TraceSource::Synthetic(SynthParams::default());
    (0..n).map(|i| build_set(&source, &SetSpec::default(), &catalog, 1, i).unwrap()).collect()
}

fn set_generation(c: &mut Criterion) {
    let catalog = WorkloadCatalog::standard();
    let source = TraceSource::Synthetic(SynthParams::default());
    let spec = SetSpec::default();
    let indices: Vec<u64> = (0..16).collect();
    let mut g = c.benchmark_group("build_sets");
    g.sample_size(10);
    g.bench_function("parallel", |b| {
        b.iter(|| par::map(&indices, |&i| build_set(&source, &spec, &catalog, 1, i).unwrap()))
    });
    g.bench_function("sequential", |b| {
        b.iter(|| par::map_seq(&indices, |&i| build_set(&source, &spec, &catalog, 1, i).unwrap()))
    });
    g.finish();
}

fn simulation_batch(c: &mut Criterion) {
    let catalog = WorkloadCatalog::standard();
    let sets = sets(8);
    let systems: Vec<SystemSpec> = [PolicyKind::Lru, PolicyKind::Lfu, PolicyKind::Gdsf, PolicyKind::Belady]
        .into_iter()
        .map(|p| SystemSpec::new(PoolConfig::tiered(6, 2), p))
        .collect();
    let jobs: Vec<(&TraceSet, &SystemSpec)> = sets.iter().flat_map(|s| systems.iter().map(move |y| (s, y))).collect();
    let base = SimConfig { saturation: Saturation::Drop, ..SimConfig::default() };
    let run = |(set, system): &(&TraceSet, &SystemSpec)| {
        let cfg = SimConfig { pool: system.pool.clone(), ..base.clone() };
        sim::run(&set.events, &cfg, &catalog, Policy::new(system.policy), set.index).unwrap().evictions
    };
    let mut g = c.benchmark_group("simulate");
    g.sample_size(10);
    for (name, parallel) in [("parallel", true), ("sequential", false)] {
        g.bench_with_input(BenchmarkId::new(name, jobs.len()), &jobs, |b, jobs| {
            b.iter(|| {
                let out = if parallel { par::map(jobs, run) } else { par::map_seq(jobs, run) };
                black_box(out)
            })
        });
    }
    g.finish();
}

criterion_group!(benches, set_generation, simulation_batch);
criterion_main!(benches);
