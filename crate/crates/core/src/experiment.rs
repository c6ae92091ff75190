//! Seeded trace-set construction and multi-system runs, shared by the CLI,
//! the acceptance tests and the benches.
//!
//! A trace set is a merged invocation stream over one sampled window of a
//! day: pick traces, give each a workload and a tenant, expand the window,
//! merge, and make sure every tenant calls at least once.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::config::{ConfigError, PoolConfig, SimConfig, TIERED_KEEPALIVE_MS, VANILLA_KEEPALIVE_MS};
use crate::learn::MlpModel;
use crate::par;
use crate::policies::{Policy, PolicyKind};
use crate::report::{self, ComparisonTable, ReportError, RunRecord, SimulationReport};
use crate::rng;
use crate::sim::{self, RunLog, SimError};
use crate::trace::{
    self, AzureTraceRow, InvocationEvent, Scenario, SynthParams, TenantKind, TenantParams, TenantProfile, TraceError,
    TraceId, MINUTES_PER_DAY, MS_PER_MINUTE,
};
use crate::workload::{WorkloadCatalog, WorkloadId};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("system {0} uses the learned policy but no model was given")]
    ModelMissing(String),
    #[error("bad system label {label:?}: {detail}")]
    BadSystem { label: String, detail: String },
    #[error("duplicate system label {0}")]
    DuplicateSystem(String),
}

impl ExperimentError {
    pub fn is_invariant_breach(&self) -> bool {
        matches!(self, ExperimentError::Sim(e) if e.is_invariant_breach())
    }
}

/// Where trace rows come from.
#[derive(Debug, Clone)]
pub enum TraceSource {
    /// Fresh synthetic rows per set; identities depend on the set seed only,
    /// so changing `day` replays the same traces on another day.
    Synthetic(SynthParams),
    /// A fixed pool of rows (e.g. a loaded day file), sampled per set.
    Rows(Vec<AzureTraceRow>),
}

#[derive(Debug, Clone)]
pub struct SetSpec {
    pub scenario: Scenario,
    pub tenants: TenantParams,
    pub traces_per_set: usize,
    /// Inclusive bounds of the sampled window length in minutes.
    pub window_minutes: (u32, u32),
}

impl Default for SetSpec {
    fn default() -> Self {
        Self {
            scenario: Scenario::S1RegularOnly,
            tenants: TenantParams { tenants: 8, mobile_ratio: (1, 1) },
            traces_per_set: 40,
            window_minutes: (10, 15),
        }
    }
}

impl SetSpec {
    fn class_counts(&self) -> (usize, usize) {
        let t = self.tenants.tenants;
        let n_mobile = match self.scenario {
            Scenario::S1RegularOnly => 0,
            Scenario::S2MobileOnly => t,
            Scenario::S3Mixed => {
                let (m, r) = self.tenants.mobile_ratio;
                t * m as usize / (m + r).max(1) as usize
            }
        };
        let n_regular_tenants = t - n_mobile;
        let regular_traces = if n_regular_tenants == 0 {
            0
        } else {
            self.traces_per_set.saturating_sub(n_mobile).max(n_regular_tenants)
        };
        (n_mobile, regular_traces)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceSet {
    pub index: u64,
    pub events: Vec<InvocationEvent>,
    pub profiles: Vec<TenantProfile>,
    pub window_start_min: usize,
    pub window_len_min: usize,
}

fn pick_rows(source: &TraceSource, spec: &SetSpec, seed: u64) -> Result<Vec<AzureTraceRow>, TraceError> {
    let (n_mobile, n_regular) = spec.class_counts();
    match source {
        TraceSource::Synthetic(params) => {
            let mobile = SynthParams { traces: n_mobile, mobile_fraction: 1.0, ..params.clone() };
            let regular = SynthParams { traces: n_regular, mobile_fraction: 0.0, ..params.clone() };
            let mut rows = trace::synthesize(&mobile, rng::derive_seed(seed, "set-mobile", 0));
            rows.extend(trace::synthesize(&regular, rng::derive_seed(seed, "set-regular", 0)));
            Ok(rows)
        }
        TraceSource::Rows(all) => {
            let kept = trace::filter_outliers(all);
            let (mut mobile, mut regular): (Vec<&AzureTraceRow>, Vec<&AzureTraceRow>) =
                kept.iter().partition(|r| r.kind() == TenantKind::Mobile);
            if mobile.len() < n_mobile {
                return Err(TraceError::Deficit { class: TenantKind::Mobile, need: n_mobile, have: mobile.len() });
            }
            if regular.len() < n_regular {
                return Err(TraceError::Deficit { class: TenantKind::Regular, need: n_regular, have: regular.len() });
            }
            mobile.shuffle(&mut rng::stream(seed, "pick-mobile", 0));
            regular.shuffle(&mut rng::stream(seed, "pick-regular", 0));
            Ok(mobile
                .into_iter()
                .take(n_mobile)
                .chain(regular.into_iter().take(n_regular))
                .cloned()
                .collect())
        }
    }
}

/// Builds set `index` of a seeded family.
pub fn build_set(
    source: &TraceSource,
    spec: &SetSpec,
    catalog: &WorkloadCatalog,
    seed: u64,
    index: u64,
) -> Result<TraceSet, TraceError> {
    let set_seed = rng::derive_seed(seed, "set", index);
    let rows = pick_rows(source, spec, set_seed)?;
    let profiles = trace::assign_tenants(&rows, spec.scenario, spec.tenants, set_seed)?;

    let mut r = rng::stream(set_seed, "window", 0);
    let (lo, hi) = spec.window_minutes;
    let len = (r.random_range(lo.min(hi)..=hi.max(lo)) as usize).clamp(1, MINUTES_PER_DAY);
    let start = r.random_range(0..=MINUTES_PER_DAY - len);

    let mut workload_rng = rng::stream(set_seed, "workloads", 0);
    let workload_of: Vec<WorkloadId> = (0..rows.len())
        .map(|_| workload_rng.random_range(0..catalog.len() as WorkloadId))
        .collect();

    let mut streams = Vec::new();
    for p in &profiles {
        for &t in &p.assigned_trace_ids {
            streams.push(trace::expand_trace_window(
                &rows[t as usize],
                start..start + len,
                t,
                p.tenant_id,
                workload_of[t as usize],
            ));
        }
    }
    let mut events = trace::merge_streams(streams);
    let window_ms = 0..len as u64 * MS_PER_MINUTE;
    for p in &profiles {
        if let Some(&t) = p.assigned_trace_ids.first() {
            events = trace::inject_min_invocation(
                events,
                p.tenant_id,
                t as TraceId,
                workload_of[t as usize],
                window_ms.clone(),
                set_seed,
            );
        }
    }
    Ok(TraceSet { index, events, profiles, window_start_min: start, window_len_min: len })
}

/// Sets `first..first + count` of a seeded family, built in parallel.
pub fn build_sets(
    source: &TraceSource,
    spec: &SetSpec,
    catalog: &WorkloadCatalog,
    seed: u64,
    first: u64,
    count: usize,
) -> Result<Vec<TraceSet>, TraceError> {
    let indices: Vec<u64> = (first..first + count as u64).collect();
    par::try_map(&indices, |&i| build_set(source, spec, catalog, seed, i))
}

/// A labelled system under test, e.g. `tiered-24-8:learned`.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    pub label: String,
    pub pool: PoolConfig,
    pub policy: PolicyKind,
}

impl SystemSpec {
    pub fn new(pool: PoolConfig, policy: PolicyKind) -> Self {
        let kind = if pool.reclaim_enabled { "tiered" } else { "vanilla" };
        let label = format!("{kind}-{}:{policy}", pool.shorthand());
        Self { label, pool, policy }
    }
}

impl fmt::Display for SystemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)
    }
}

/// `vanilla-W-R` has no reclaim pool and 10-minute keep-alive; `tiered-W-R`
/// enables the reclaim pool with 5-minute keep-alive in both tiers. The
/// policy suffix defaults to `lru`.
impl FromStr for SystemSpec {
    type Err = ExperimentError;
    fn from_str(label: &str) -> Result<Self, Self::Err> {
        let bad = |detail: String| ExperimentError::BadSystem { label: label.to_string(), detail };
        let (head, policy) = match label.split_once(':') {
            Some((h, p)) => (h, p.parse::<PolicyKind>().map_err(bad)?),
            None => (label, PolicyKind::Lru),
        };
        let (kind, shorthand) = head.split_once('-').ok_or_else(|| bad("expected <kind>-W-R".into()))?;
        let (w, r) = crate::config::parse_pool_shorthand(shorthand)?;
        let pool = match kind {
            "vanilla" => {
                if r != 0 {
                    return Err(bad("vanilla systems have no reclaim pool; use R = 0".into()));
                }
                let mut p = PoolConfig::vanilla(w);
                p.warm_keepalive_ms = VANILLA_KEEPALIVE_MS;
                p
            }
            "tiered" => {
                let mut p = PoolConfig::tiered(w, r);
                p.warm_keepalive_ms = TIERED_KEEPALIVE_MS;
                p.reclaim_keepalive_ms = TIERED_KEEPALIVE_MS;
                p
            }
            other => return Err(bad(format!("unknown kind {other:?} (expected vanilla or tiered)"))),
        };
        pool.validate()?;
        Ok(Self { label: label.to_string(), pool, policy })
    }
}

pub fn make_policy(kind: PolicyKind, model: Option<&Arc<MlpModel>>, label: &str) -> Result<Policy, ExperimentError> {
    match kind {
        PolicyKind::Learned => model
            .map(|m| Policy::learned(Arc::clone(m)))
            .ok_or_else(|| ExperimentError::ModelMissing(label.to_string())),
        other => Ok(Policy::new(other)),
    }
}

/// One system on one stream. `base` supplies everything except the pool.
pub fn run_system(
    events: &[InvocationEvent],
    system: &SystemSpec,
    base: &SimConfig,
    catalog: &WorkloadCatalog,
    model: Option<&Arc<MlpModel>>,
    seed: u64,
) -> Result<RunLog, ExperimentError> {
    let cfg = SimConfig { pool: system.pool.clone(), ..base.clone() };
    let policy = make_policy(system.policy, model, &system.label)?;
    Ok(sim::run(events, &cfg, catalog, policy, seed)?)
}

/// Runs every system on every set and tabulates the results. The set index
/// serves as the repetition seed.
pub fn compare_on_sets(
    sets: &[TraceSet],
    systems: &[SystemSpec],
    base: &SimConfig,
    catalog: &WorkloadCatalog,
    model: Option<&Arc<MlpModel>>,
    scenario: &str,
) -> Result<(ComparisonTable, Vec<RunRecord>), ExperimentError> {
    for (i, s) in systems.iter().enumerate() {
        if systems[..i].iter().any(|o| o.label == s.label) {
            return Err(ExperimentError::DuplicateSystem(s.label.clone()));
        }
    }
    let jobs: Vec<(&TraceSet, &SystemSpec)> =
        sets.iter().flat_map(|set| systems.iter().map(move |s| (set, s))).collect();
    let reports: Vec<SimulationReport> = par::try_map(&jobs, |(set, system)| {
        let log = run_system(&set.events, system, base, catalog, model, set.index)?;
        Ok::<_, ExperimentError>(report::summarize(&log, report::DEFAULT_WINDOW_MS))
    })?;
    let records: Vec<RunRecord> = jobs
        .iter()
        .zip(reports)
        .map(|((set, system), report)| RunRecord {
            system: system.label.clone(),
            scenario: scenario.to_string(),
            seed: set.index,
            report,
        })
        .collect();
    Ok((report::compare(&records)?, records))
}
