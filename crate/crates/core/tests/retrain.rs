//! Day-over-day retraining. The evaluation sets keep their traces across
//! days while rates drift; a model retrained on the day-2 version of those
//! sets, mixed with half the day-1 corpus, is compared with the day-1 model
//! on day 3.

use std::sync::Arc;

use warmpool::config::{PolicyScope, PoolConfig, Saturation, SimConfig};
use warmpool::experiment::{build_sets, compare_on_sets, SetSpec, SystemSpec, TraceSet, TraceSource};
use warmpool::learn::{self, Dataset, MlpModel, RetrainStrategy, TrainConfig};
use warmpool::policies::PolicyKind;
use warmpool::trace::{Scenario, SynthParams, TenantParams};
use warmpool::workload::WorkloadCatalog;

const POOL: usize = 4;

fn spec() -> SetSpec {
    SetSpec {
        scenario: Scenario::S1RegularOnly,
        tenants: TenantParams { tenants: 1, mobile_ratio: (1, 1) },
        traces_per_set: 40,
        window_minutes: (10, 15),
    }
}

fn base_cfg() -> SimConfig {
    SimConfig { pool: PoolConfig::vanilla(POOL), saturation: Saturation::Drop, scope: PolicyScope::All, ..SimConfig::default() }
}

fn sets(day: u32, seed: u64, first: u64, count: usize, catalog: &WorkloadCatalog) -> Vec<TraceSet> {
    let source = TraceSource::Synthetic(SynthParams { day, ..SynthParams::default() });
    build_sets(&source, &spec(), catalog, seed, first, count).unwrap()
}

fn samples(sets: &[TraceSet], catalog: &WorkloadCatalog, seed: u64) -> Dataset {
    let streams: Vec<_> = sets.iter().map(|s| s.events.clone()).collect();
    learn::generate_training_data(&streams, &base_cfg(), catalog, seed).unwrap()
}

fn learned_warm_rate(sets: &[TraceSet], model: MlpModel, catalog: &WorkloadCatalog) -> f64 {
    let model = Arc::new(model);
    let system = SystemSpec::new(PoolConfig::vanilla(POOL), PolicyKind::Learned);
    let (table, _) = compare_on_sets(sets, &[system], &base_cfg(), catalog, Some(&model), "S1").unwrap();
    table.rows[0].mean_warm_rate_pct
}

#[test]
fn retrained_model_holds_up_on_the_next_day() {
    let catalog = WorkloadCatalog::standard();
    let mut wins = 0;
    let mut lines = Vec::new();
    for run in 0..10u64 {
        let cfg = TrainConfig { epochs: 6, hidden: vec![64, 64], seed: run, mix_old_fraction: 0.5, ..TrainConfig::default() };
        let day1 = samples(&sets(1, run, 0, 20, &catalog), &catalog, run);
        let base = learn::train(&day1, &cfg).unwrap().model;

        let test_first = 10_000;
        let day2 = samples(&sets(2, run, test_first, 20, &catalog), &catalog, run);
        let retrained = learn::retrain(None, &day1, &day2, RetrainStrategy::Mixed, &cfg).unwrap().model;

        let day3 = sets(3, run, test_first, 20, &catalog);
        let before = learned_warm_rate(&day3, base, &catalog);
        let after = learned_warm_rate(&day3, retrained, &catalog);
        if after >= before {
            wins += 1;
        }
        lines.push(format!("run {run}: day-1 model {before:.2}%, retrained {after:.2}%"));
    }
    assert!(wins >= 6, "retrained model won {wins}/10:\n{}", lines.join("\n"));
}
