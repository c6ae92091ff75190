//! Invocation traces: Azure-format per-minute counts, their expansion into a
//! deterministic event stream, tenant assignment for the evaluation scenarios,
//! spike analysis, and a seeded synthetic generator for runs without the real
//! dataset.

use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::ops::Range;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;
use crate::workload::WorkloadId;

pub const MINUTES_PER_DAY: usize = 1440;
pub const MS_PER_MINUTE: u64 = 60_000;
/// Traces with fewer daily invocations than this belong to mobile users.
pub const MOBILE_DAILY_LIMIT: u64 = 100;
pub const OUTLIER_MIN_DAILY: u64 = 10;
pub const OUTLIER_MAX_DAILY: u64 = 10_000;

pub type TenantId = u32;
pub type TraceId = u32;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {source}")]
    Csv { line: u64, source: csv::Error },
    #[error("line {line}: expected 1440 columns, found {found}")]
    Arity { line: u64, found: usize },
    #[error("line {line}: column {column}: invalid count {value:?}")]
    BadCount { line: u64, column: usize, value: String },
    #[error("line {line}: column {column}: negative count {value}")]
    NegativeCount { line: u64, column: usize, value: i64 },
    #[error("no invocations")]
    NoInvocations,
    #[error("need {need} {class} traces, have {have} (deficit {})", need - have)]
    Deficit { class: TenantKind, need: usize, have: usize },
    #[error("event file line {line}: {detail}")]
    EventFile { line: u64, detail: String },
}

/// One function's invocation counts for each minute of a day.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AzureTraceRow {
    pub key: String,
    pub per_minute_counts: Vec<u32>,
}

impl AzureTraceRow {
    /// Panics unless `counts` has exactly 1440 entries.
    pub fn new(key: impl Into<String>, counts: Vec<u32>) -> Self {
        assert_eq!(counts.len(), MINUTES_PER_DAY, "a trace row covers 1440 minutes");
        Self { key: key.into(), per_minute_counts: counts }
    }

    pub fn total(&self) -> u64 {
        self.per_minute_counts.iter().map(|&c| u64::from(c)).sum()
    }

    pub fn total_in(&self, minutes: Range<usize>) -> u64 {
        self.per_minute_counts[minutes].iter().map(|&c| u64::from(c)).sum()
    }

    pub fn kind(&self) -> TenantKind {
        if self.total() < MOBILE_DAILY_LIMIT {
            TenantKind::Mobile
        } else {
            TenantKind::Regular
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct InvocationEvent {
    pub t_ms: u64,
    pub tenant_id: TenantId,
    pub workload_id: WorkloadId,
    pub trace_id: TraceId,
    /// Global arrival index, assigned by [`merge_streams`].
    pub seq: u64,
}

// ---------------------------------------------------------------------------
// Azure CSV

/// Parses Azure-format CSV: an optional header, then one row per function
/// holding a key and 1440 per-minute counts.
///
/// A header whose count columns are named `1`..`1440` may be preceded by
/// several identifier columns (the public dataset uses owner, app, function
/// and trigger); they are joined with `:` into the row key.
pub fn parse_azure_csv<R: Read>(reader: R) -> Result<Vec<AzureTraceRow>, TraceError> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows = Vec::new();
    let mut key_columns = 1usize;
    let mut first = true;
    for record in csv.records() {
        let record = record.map_err(|e| TraceError::Csv {
            line: e.position().map_or(0, |p| p.line()),
            source: e,
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if first {
            first = false;
            if let Some(cols) = header_key_columns(&record) {
                key_columns = cols;
                continue;
            }
        }
        if record.iter().all(str::is_empty) {
            continue;
        }
        if record.len() < key_columns || record.len() - key_columns != MINUTES_PER_DAY {
            return Err(TraceError::Arity {
                line,
                found: record.len().saturating_sub(key_columns),
            });
        }
        let key = record.iter().take(key_columns).collect::<Vec<_>>().join(":");
        let mut counts = Vec::with_capacity(MINUTES_PER_DAY);
        for (i, field) in record.iter().skip(key_columns).enumerate() {
            let column = key_columns + i + 1;
            let value: i64 = field.parse().map_err(|_| TraceError::BadCount {
                line,
                column,
                value: field.to_string(),
            })?;
            if value < 0 {
                return Err(TraceError::NegativeCount { line, column, value });
            }
            let value = u32::try_from(value).map_err(|_| TraceError::BadCount {
                line,
                column,
                value: field.to_string(),
            })?;
            counts.push(value);
        }
        rows.push(AzureTraceRow { key, per_minute_counts: counts });
    }
    Ok(rows)
}

/// Returns the number of key columns if `record` looks like a header: either
/// its last 1440 fields are the minute labels `1`..`1440`, or none of its
/// fields after the first is numeric.
fn header_key_columns(record: &csv::StringRecord) -> Option<usize> {
    let n = record.len();
    if n > MINUTES_PER_DAY
        && record
            .iter()
            .skip(n - MINUTES_PER_DAY)
            .enumerate()
            .all(|(i, f)| f.parse::<usize>() == Ok(i + 1))
    {
        return Some(n - MINUTES_PER_DAY);
    }
    if n > 1 && record.iter().skip(1).all(|f| f.parse::<i64>().is_err()) {
        return Some(n.saturating_sub(MINUTES_PER_DAY).max(1));
    }
    None
}

pub fn load_azure_csv(path: impl AsRef<Path>) -> Result<Vec<AzureTraceRow>, TraceError> {
    parse_azure_csv(BufReader::new(File::open(path)?))
}

pub fn write_azure_csv<W: Write>(rows: &[AzureTraceRow], mut out: W) -> io::Result<()> {
    write!(out, "key")?;
    for m in 1..=MINUTES_PER_DAY {
        write!(out, ",{m}")?;
    }
    writeln!(out)?;
    for row in rows {
        write!(out, "{}", row.key)?;
        for c in &row.per_minute_counts {
            write!(out, ",{c}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Keeps rows whose daily total lies in `[10, 10000]`.
pub fn filter_outliers(rows: &[AzureTraceRow]) -> Vec<AzureTraceRow> {
    rows.iter()
        .filter(|r| (OUTLIER_MIN_DAILY..=OUTLIER_MAX_DAILY).contains(&r.total()))
        .cloned()
        .collect()
}

// ---------------------------------------------------------------------------
// Expansion

/// Spreads each minute's invocations evenly across that minute.
pub fn expand_trace(
    row: &AzureTraceRow,
    trace_id: TraceId,
    tenant_id: TenantId,
    workload_id: WorkloadId,
) -> Vec<InvocationEvent> {
    expand_trace_window(row, 0..MINUTES_PER_DAY, trace_id, tenant_id, workload_id)
}

/// Like [`expand_trace`] restricted to `minutes`, with timestamps relative to
/// the start of the window.
pub fn expand_trace_window(
    row: &AzureTraceRow,
    minutes: Range<usize>,
    trace_id: TraceId,
    tenant_id: TenantId,
    workload_id: WorkloadId,
) -> Vec<InvocationEvent> {
    let origin = minutes.start as u64 * MS_PER_MINUTE;
    let mut events = Vec::with_capacity(row.total_in(minutes.clone()) as usize);
    for m in minutes {
        let c = u64::from(row.per_minute_counts[m]);
        let base = m as u64 * MS_PER_MINUTE - origin;
        for k in 0..c {
            events.push(InvocationEvent {
                t_ms: base + k * MS_PER_MINUTE / c,
                tenant_id,
                workload_id,
                trace_id,
                seq: 0,
            });
        }
    }
    events
}

/// Merges individually sorted streams into one strictly increasing stream.
///
/// Events sharing a timestamp keep (time, trace id) order; each later one is
/// pushed 1 ms past its predecessor, cascading as needed. `seq` is assigned
/// 0..N-1 in the final order.
pub fn merge_streams(streams: Vec<Vec<InvocationEvent>>) -> Vec<InvocationEvent> {
    let mut all: Vec<InvocationEvent> = streams.into_iter().flatten().collect();
    all.sort_by_key(|e| (e.t_ms, e.trace_id));
    let mut prev: Option<u64> = None;
    for (seq, e) in all.iter_mut().enumerate() {
        if let Some(p) = prev {
            if e.t_ms <= p {
                e.t_ms = p + 1;
            }
        }
        prev = Some(e.t_ms);
        e.seq = seq as u64;
    }
    all
}

/// Guarantees `tenant_id` at least one request inside `window_ms`.
///
/// When the tenant has none, one event for (`trace_id`, `workload_id`) is
/// placed at a uniformly drawn millisecond of the window and the stream is
/// re-merged. The draw depends only on `seed` and the tenant.
pub fn inject_min_invocation(
    events: Vec<InvocationEvent>,
    tenant_id: TenantId,
    trace_id: TraceId,
    workload_id: WorkloadId,
    window_ms: Range<u64>,
    seed: u64,
) -> Vec<InvocationEvent> {
    let present = events
        .iter()
        .any(|e| e.tenant_id == tenant_id && window_ms.contains(&e.t_ms));
    if present || window_ms.is_empty() {
        return events;
    }
    let t_ms = rng::stream(seed, "inject", u64::from(tenant_id)).random_range(window_ms);
    let extra = InvocationEvent { t_ms, tenant_id, workload_id, trace_id, seq: 0 };
    merge_streams(vec![events, vec![extra]])
}

// ---------------------------------------------------------------------------
// Tenants

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TenantKind {
    Regular,
    Mobile,
}

impl fmt::Display for TenantKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TenantKind::Regular => "regular",
            TenantKind::Mobile => "mobile",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scenario {
    /// Regular users only; each tenant holds several traces.
    S1RegularOnly,
    /// Mobile users only; one sub-100 trace per tenant.
    S2MobileOnly,
    /// Both populations at a mobile:regular ratio.
    S3Mixed,
}

impl Scenario {
    pub fn label(&self) -> &'static str {
        match self {
            Scenario::S1RegularOnly => "S1",
            Scenario::S2MobileOnly => "S2",
            Scenario::S3Mixed => "S3",
        }
    }
}

impl std::str::FromStr for Scenario {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "s1" | "regular" => Ok(Scenario::S1RegularOnly),
            "s2" | "mobile" => Ok(Scenario::S2MobileOnly),
            "s3" | "mixed" => Ok(Scenario::S3Mixed),
            other => Err(format!("unknown scenario {other:?} (expected s1, s2 or s3)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TenantProfile {
    pub tenant_id: TenantId,
    pub kind: TenantKind,
    /// Indices into the row list handed to [`assign_tenants`], ascending.
    pub assigned_trace_ids: Vec<TraceId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TenantParams {
    pub tenants: usize,
    /// mobile:regular, used by the mixed scenario only.
    pub mobile_ratio: (u32, u32),
}

/// Builds tenant profiles for a scenario. Trace ids are row indices.
///
/// Regular traces are shuffled and dealt round-robin to regular tenants; each
/// mobile tenant receives one distinct sub-100 trace. In the mixed scenario the
/// mobile share is `tenants * m / (m + r)`, rounded down.
pub fn assign_tenants(
    rows: &[AzureTraceRow],
    scenario: Scenario,
    params: TenantParams,
    seed: u64,
) -> Result<Vec<TenantProfile>, TraceError> {
    let (mut mobile, mut regular): (Vec<TraceId>, Vec<TraceId>) = (0..rows.len() as TraceId)
        .partition(|&i| rows[i as usize].kind() == TenantKind::Mobile);
    mobile.shuffle(&mut rng::stream(seed, "assign-mobile", 0));
    regular.shuffle(&mut rng::stream(seed, "assign-regular", 0));

    let (n_mobile, n_regular) = match scenario {
        Scenario::S1RegularOnly => (0, params.tenants),
        Scenario::S2MobileOnly => (params.tenants, 0),
        Scenario::S3Mixed => {
            let (m, r) = params.mobile_ratio;
            let denom = (m + r).max(1) as usize;
            let n_mobile = params.tenants * m as usize / denom;
            (n_mobile, params.tenants - n_mobile)
        }
    };
    if mobile.len() < n_mobile {
        return Err(TraceError::Deficit { class: TenantKind::Mobile, need: n_mobile, have: mobile.len() });
    }
    if regular.len() < n_regular {
        return Err(TraceError::Deficit { class: TenantKind::Regular, need: n_regular, have: regular.len() });
    }

    let mut profiles = Vec::with_capacity(params.tenants);
    for (i, &trace) in mobile.iter().take(n_mobile).enumerate() {
        profiles.push(TenantProfile {
            tenant_id: i as TenantId,
            kind: TenantKind::Mobile,
            assigned_trace_ids: vec![trace],
        });
    }
    let mut regular_profiles: Vec<TenantProfile> = (0..n_regular)
        .map(|i| TenantProfile {
            tenant_id: (n_mobile + i) as TenantId,
            kind: TenantKind::Regular,
            assigned_trace_ids: Vec::new(),
        })
        .collect();
    if n_regular > 0 {
        for (i, &trace) in regular.iter().enumerate() {
            regular_profiles[i % n_regular].assigned_trace_ids.push(trace);
        }
    }
    profiles.extend(regular_profiles);
    for p in &mut profiles {
        p.assigned_trace_ids.sort_unstable();
    }
    Ok(profiles)
}

// ---------------------------------------------------------------------------
// Spikes

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeReport {
    pub spike_minutes: Vec<u32>,
    /// Mean gap between consecutive spikes; `None` with fewer than two spikes.
    pub mean_interval_min: Option<f64>,
    pub interval_cdf: Vec<(u32, f64)>,
}

impl SpikeReport {
    pub fn intervals(&self) -> Vec<u32> {
        self.spike_minutes.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

/// A minute is a spike when its count is at least twice the daily per-minute
/// mean (and nonzero).
pub fn detect_spikes(row: &AzureTraceRow) -> Result<SpikeReport, TraceError> {
    let total = row.total();
    if total == 0 {
        return Err(TraceError::NoInvocations);
    }
    // count >= 2 * total / 1440, kept in integers so scaling is exact.
    let spike_minutes: Vec<u32> = row
        .per_minute_counts
        .iter()
        .enumerate()
        .filter(|&(_, &c)| c > 0 && u64::from(c) * MINUTES_PER_DAY as u64 >= 2 * total)
        .map(|(m, _)| m as u32)
        .collect();
    let intervals: Vec<u32> = spike_minutes.windows(2).map(|w| w[1] - w[0]).collect();
    let mean_interval_min = (!intervals.is_empty())
        .then(|| intervals.iter().map(|&i| f64::from(i)).sum::<f64>() / intervals.len() as f64);
    Ok(SpikeReport { spike_minutes, mean_interval_min, interval_cdf: interval_cdf(&intervals) })
}

/// Empirical CDF over interval lengths: one point per distinct value.
pub fn interval_cdf(intervals: &[u32]) -> Vec<(u32, f64)> {
    let mut sorted = intervals.to_vec();
    sorted.sort_unstable();
    let n = sorted.len() as f64;
    let mut cdf: Vec<(u32, f64)> = Vec::new();
    for (i, &v) in sorted.iter().enumerate() {
        let frac = (i + 1) as f64 / n;
        match cdf.last_mut() {
            Some(last) if last.0 == v => last.1 = frac,
            _ => cdf.push((v, frac)),
        }
    }
    if let Some(last) = cdf.last_mut() {
        last.1 = 1.0;
    }
    cdf
}

/// Intervals of every row with at least one invocation, pooled.
pub fn pooled_spike_intervals(rows: &[AzureTraceRow]) -> Vec<u32> {
    rows.iter()
        .filter_map(|r| detect_spikes(r).ok())
        .flat_map(|r| r.intervals())
        .collect()
}

/// Share of intervals strictly longer than `minutes`.
pub fn fraction_longer_than(intervals: &[u32], minutes: u32) -> f64 {
    if intervals.is_empty() {
        return 0.0;
    }
    intervals.iter().filter(|&&i| i > minutes).count() as f64 / intervals.len() as f64
}

pub fn write_spike_cdf<W: Write>(cdf: &[(u32, f64)], mut out: W) -> io::Result<()> {
    writeln!(out, "interval_minutes,cumulative_fraction")?;
    for (interval, frac) in cdf {
        writeln!(out, "{interval},{frac:.6}")?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Event files

pub fn write_events<W: Write>(events: &[InvocationEvent], mut out: W) -> io::Result<()> {
    for e in events {
        writeln!(out, "{},{},{},{}", e.t_ms, e.tenant_id, e.workload_id, e.trace_id)?;
    }
    Ok(())
}

/// Reads `t_ms,tenant_id,workload_id,trace_id` lines; timestamps must be
/// strictly increasing. Blank lines and `#` comments are skipped.
pub fn read_events<R: Read>(reader: R) -> Result<Vec<InvocationEvent>, TraceError> {
    let mut events = Vec::new();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let lineno = idx as u64 + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let bad = |detail: String| TraceError::EventFile { line: lineno, detail };
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(bad(format!("expected 4 fields, found {}", fields.len())));
        }
        let num = |i: usize, name: &str| -> Result<u64, TraceError> {
            fields[i]
                .parse::<u64>()
                .map_err(|_| bad(format!("invalid {name} {:?}", fields[i])))
        };
        let t_ms = num(0, "t_ms")?;
        let small = |i: usize, name: &str| -> Result<u32, TraceError> {
            u32::try_from(num(i, name)?).map_err(|_| bad(format!("{name} out of range")))
        };
        let event = InvocationEvent {
            t_ms,
            tenant_id: small(1, "tenant_id")?,
            workload_id: small(2, "workload_id")?,
            trace_id: small(3, "trace_id")?,
            seq: events.len() as u64,
        };
        if let Some(prev) = events.last() {
            let prev: &InvocationEvent = prev;
            if event.t_ms <= prev.t_ms {
                return Err(bad(format!("t_ms {} not after {}", event.t_ms, prev.t_ms)));
            }
        }
        events.push(event);
    }
    Ok(events)
}

// ---------------------------------------------------------------------------
// Synthetic traces
//
// Not derived from any measured dataset: per-minute counts are Poisson draws
// modulated by an on/off activity process plus random burst minutes.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub traces: usize,
    /// Daily totals of regular traces are log-uniform in this range.
    pub regular_daily: (f64, f64),
    /// Share of traces generated as mobile (fewer than 100 invocations a day).
    pub mobile_fraction: f64,
    /// Per-minute probability that an active minute bursts.
    pub burst_prob: f64,
    pub burst_multiplier: f64,
    /// Bounds for the per-trace fraction of the day spent active.
    pub duty_cycle: (f64, f64),
    /// Bounds for the mean length of an active period, in minutes.
    pub active_period_min: (f64, f64),
    /// Day index; traces keep their identity across days while their rates
    /// drift as a log-normal random walk of this step size.
    pub day: u32,
    pub day_drift_sigma: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            traces: 40,
            regular_daily: (100.0, 10_000.0),
            mobile_fraction: 0.0,
            burst_prob: 0.02,
            burst_multiplier: 6.0,
            duty_cycle: (0.15, 0.9),
            active_period_min: (3.0, 40.0),
            day: 1,
            day_drift_sigma: 0.6,
        }
    }
}

/// Generates `params.traces` rows keyed `synth-<i>`; row `i` depends only on
/// (`seed`, `i`, `params`).
pub fn synthesize(params: &SynthParams, seed: u64) -> Vec<AzureTraceRow> {
    (0..params.traces).map(|i| synthesize_one(params, seed, i as u64)).collect()
}

fn synthesize_one(params: &SynthParams, seed: u64, index: u64) -> AzureTraceRow {
    let mut identity = rng::stream(seed, "synth-identity", index);
    let mobile = identity.random::<f64>() < params.mobile_fraction;
    let key = format!("synth-{index}");

    // The per-day realisation stream: same trace, different day, new draws.
    let day_index = index.wrapping_mul(1 << 20).wrapping_add(u64::from(params.day));
    let mut day_rng = rng::stream(seed, "synth-day", day_index);

    if mobile {
        let target: u32 = identity.random_range(1..MOBILE_DAILY_LIMIT as u32);
        let sessions = identity.random_range(1..=3u32).min(target);
        let mut counts = vec![0u32; MINUTES_PER_DAY];
        let starts: Vec<usize> = (0..sessions)
            .map(|_| day_rng.random_range(0..MINUTES_PER_DAY))
            .collect();
        for k in 0..target {
            let s = starts[(k % sessions) as usize];
            let m = (s + day_rng.random_range(0..20usize)).min(MINUTES_PER_DAY - 1);
            counts[m] += 1;
        }
        return AzureTraceRow::new(key, counts);
    }

    let (lo, hi) = params.regular_daily;
    let daily = (lo.ln() + identity.random::<f64>() * (hi.ln() - lo.ln())).exp();
    let duty = identity.random_range(params.duty_cycle.0..=params.duty_cycle.1);
    let active_len = identity.random_range(params.active_period_min.0..=params.active_period_min.1);
    let idle_len = (active_len * (1.0 - duty) / duty).max(1.0);

    let mut drift = 0.0;
    if params.day > 1 && params.day_drift_sigma > 0.0 {
        let step = Normal::new(0.0, params.day_drift_sigma).expect("finite sigma");
        for d in 2..=params.day {
            let mut walk = rng::stream(seed, "synth-drift", index.wrapping_mul(1 << 20) + u64::from(d));
            drift += step.sample(&mut walk);
        }
    }
    let active_rate = daily * drift.exp() / (MINUTES_PER_DAY as f64 * duty);

    let mut counts = vec![0u32; MINUTES_PER_DAY];
    let mut active = day_rng.random::<f64>() < duty;
    for c in counts.iter_mut() {
        let leave = if active { 1.0 / active_len } else { 1.0 / idle_len };
        if day_rng.random::<f64>() < leave {
            active = !active;
        }
        if !active {
            continue;
        }
        let mut rate = active_rate;
        if day_rng.random::<f64>() < params.burst_prob {
            rate *= params.burst_multiplier;
        }
        if rate > 0.0 {
            let draw: f64 = Poisson::new(rate).expect("positive rate").sample(&mut day_rng);
            *c = draw.min(f64::from(u32::MAX)) as u32;
        }
    }
    AzureTraceRow::new(key, counts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(counts: &[u32]) -> AzureTraceRow {
        let mut full = vec![0; MINUTES_PER_DAY];
        full[..counts.len()].copy_from_slice(counts);
        AzureTraceRow::new("r", full)
    }

    fn row_with_total(key: &str, total: u32) -> AzureTraceRow {
        let mut r = row(&[total]);
        r.key = key.to_string();
        r
    }

    fn csv_line(key: &str, counts: &[u32]) -> String {
        let mut s = key.to_string();
        for c in counts {
            s.push(',');
            s.push_str(&c.to_string());
        }
        s.push('\n');
        s
    }

    #[test]
    fn loads_all_zero_row() {
        let rows = parse_azure_csv(csv_line("f", &[0; 1440]).as_bytes()).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].per_minute_counts, vec![0; 1440]);
    }

    #[test]
    fn rejects_short_row() {
        let err = parse_azure_csv(csv_line("f", &[0; 1439]).as_bytes()).unwrap_err();
        assert!(err.to_string().contains("expected 1440 columns"), "{err}");
        assert!(err.to_string().contains("line 1"), "{err}");
    }

    #[test]
    fn negative_count_names_line() {
        let mut text = csv_line("a", &[1; 1440]);
        text.push_str(&csv_line("b", &[0; 1440]).replacen(",0", ",-3", 1));
        let err = parse_azure_csv(text.as_bytes()).unwrap_err();
        assert!(matches!(err, TraceError::NegativeCount { line: 2, value: -3, .. }), "{err}");
    }

    #[test]
    fn total_of_representative_trace() {
        // 3034 invocations: 2 per minute for 1440 minutes plus 154 extra.
        let mut counts = vec![2u32; 1440];
        for c in counts.iter_mut().take(154) {
            *c += 1;
        }
        let rows = parse_azure_csv(csv_line("f", &counts).as_bytes()).unwrap();
        assert_eq!(rows[0].total(), 3034);
    }

    #[test]
    fn accepts_header_and_multi_column_keys() {
        let mut text = String::from("HashOwner,HashApp,HashFunction,Trigger");
        for m in 1..=1440 {
            text.push_str(&format!(",{m}"));
        }
        text.push('\n');
        text.push_str(&csv_line("o,a,f,http", &[1; 1440]));
        let rows = parse_azure_csv(text.as_bytes()).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].key, "o:a:f:http");
        assert_eq!(rows[0].total(), 1440);
    }

    #[test]
    fn write_then_parse() {
        let rows = synthesize(&SynthParams { traces: 3, ..Default::default() }, 1);
        let mut buf = Vec::new();
        write_azure_csv(&rows, &mut buf).unwrap();
        assert_eq!(parse_azure_csv(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn outlier_bounds() {
        assert!(filter_outliers(&[row_with_total("a", 5)]).is_empty());
        assert_eq!(filter_outliers(&[row_with_total("a", 10)]).len(), 1);
        let kept = filter_outliers(&[
            row_with_total("a", 5),
            row_with_total("b", 500),
            row_with_total("c", 20_000),
        ]);
        assert_eq!(kept.iter().map(|r| r.key.as_str()).collect::<Vec<_>>(), ["b"]);
    }

    #[test]
    fn expand_even_spacing() {
        let ev = expand_trace(&row(&[3]), 0, 0, 0);
        assert_eq!(ev.iter().map(|e| e.t_ms).collect::<Vec<_>>(), [0, 20_000, 40_000]);
        let ev = expand_trace(&row(&[0, 0, 1]), 4, 5, 6);
        assert_eq!(ev.len(), 1);
        assert_eq!((ev[0].t_ms, ev[0].trace_id, ev[0].tenant_id, ev[0].workload_id), (120_000, 4, 5, 6));
        assert!(expand_trace(&row(&[]), 0, 0, 0).is_empty());
    }

    #[test]
    fn expand_truncates_to_integer_ms() {
        let ev = expand_trace(&row(&[7]), 0, 0, 0);
        let expected: Vec<u64> = (0..7).map(|k| k * 60_000 / 7).collect();
        assert_eq!(ev.iter().map(|e| e.t_ms).collect::<Vec<_>>(), expected);
    }

    #[test]
    fn window_expansion_is_relative() {
        let ev = expand_trace_window(&row(&[1, 2, 3]), 1..3, 0, 0, 0);
        assert_eq!(ev.iter().map(|e| e.t_ms).collect::<Vec<_>>(), [0, 30_000, 60_000, 80_000, 100_000]);
    }

    #[test]
    fn merge_breaks_ties_by_trace() {
        let a = vec![InvocationEvent { t_ms: 0, tenant_id: 0, workload_id: 0, trace_id: 1, seq: 0 }];
        let b = vec![InvocationEvent { t_ms: 0, tenant_id: 0, workload_id: 0, trace_id: 0, seq: 0 }];
        let m = merge_streams(vec![a, b]);
        assert_eq!((m[0].t_ms, m[0].trace_id, m[0].seq), (0, 0, 0));
        assert_eq!((m[1].t_ms, m[1].trace_id, m[1].seq), (1, 1, 1));
    }

    #[test]
    fn merge_disjoint_and_empty() {
        let a = expand_trace(&row(&[1]), 0, 0, 0);
        let b = expand_trace(&row(&[0, 1]), 1, 0, 0);
        let m = merge_streams(vec![b, a]);
        assert_eq!(m.iter().map(|e| e.t_ms).collect::<Vec<_>>(), [0, 60_000]);
        assert!(merge_streams(vec![]).is_empty());
        assert!(merge_streams(vec![vec![], vec![]]).is_empty());
    }

    fn rows_for_scenarios() -> Vec<AzureTraceRow> {
        let mut rows = Vec::new();
        for i in 0..4 {
            rows.push(row_with_total(&format!("reg{i}"), 500));
        }
        for i in 0..8 {
            rows.push(row_with_total(&format!("mob{i}"), 20));
        }
        rows
    }

    #[test]
    fn s2_is_a_bijection() {
        let rows: Vec<_> = (0..3).map(|i| row_with_total(&format!("m{i}"), 50)).collect();
        let p = assign_tenants(&rows, Scenario::S2MobileOnly, TenantParams { tenants: 3, mobile_ratio: (1, 1) }, 9).unwrap();
        assert_eq!(p.len(), 3);
        assert!(p.iter().all(|t| t.kind == TenantKind::Mobile && t.assigned_trace_ids.len() == 1));
        let mut all: Vec<_> = p.iter().flat_map(|t| t.assigned_trace_ids.clone()).collect();
        all.sort();
        assert_eq!(all, [0, 1, 2]);
    }

    #[test]
    fn s1_round_robin() {
        let rows: Vec<_> = (0..4).map(|i| row_with_total(&format!("r{i}"), 500)).collect();
        let p = assign_tenants(&rows, Scenario::S1RegularOnly, TenantParams { tenants: 2, mobile_ratio: (1, 1) }, 3).unwrap();
        assert_eq!(p.len(), 2);
        assert!(p.iter().all(|t| t.assigned_trace_ids.len() == 2 && t.kind == TenantKind::Regular));
    }

    #[test]
    fn s3_ratio() {
        let p = assign_tenants(&rows_for_scenarios(), Scenario::S3Mixed, TenantParams { tenants: 8, mobile_ratio: (3, 1) }, 3).unwrap();
        assert_eq!(p.iter().filter(|t| t.kind == TenantKind::Mobile).count(), 6);
        assert_eq!(p.iter().filter(|t| t.kind == TenantKind::Regular).count(), 2);
        let ids: Vec<_> = p.iter().map(|t| t.tenant_id).collect();
        assert_eq!(ids, (0..8).collect::<Vec<_>>());
    }

    #[test]
    fn deficit_is_reported() {
        let err = assign_tenants(&rows_for_scenarios(), Scenario::S2MobileOnly, TenantParams { tenants: 10, mobile_ratio: (1, 1) }, 3).unwrap_err();
        assert!(err.to_string().contains("deficit 2"), "{err}");
        assert!(matches!(err, TraceError::Deficit { class: TenantKind::Mobile, need: 10, have: 8 }));
    }

    #[test]
    fn uniform_counts_have_no_spikes() {
        let r = detect_spikes(&AzureTraceRow::new("u", vec![1; 1440])).unwrap();
        assert!(r.spike_minutes.is_empty());
        assert!(r.interval_cdf.is_empty());
    }

    #[test]
    fn sparse_row_spikes_everywhere_nonzero() {
        let r = detect_spikes(&row(&[1, 1, 10, 1, 1])).unwrap();
        assert_eq!(r.spike_minutes, [0, 1, 2, 3, 4]);
        assert_eq!(r.intervals(), [1, 1, 1, 1]);
        assert_eq!(r.mean_interval_min, Some(1.0));
        assert_eq!(r.interval_cdf, [(1, 1.0)]);
    }

    #[test]
    fn single_spike_has_no_intervals() {
        let r = detect_spikes(&row(&[0, 0, 0, 4])).unwrap();
        assert_eq!(r.spike_minutes, [3]);
        assert!(r.interval_cdf.is_empty());
        assert_eq!(r.mean_interval_min, None);
    }

    #[test]
    fn all_zero_row_is_an_error() {
        assert!(matches!(detect_spikes(&row(&[])), Err(TraceError::NoInvocations)));
        assert_eq!(detect_spikes(&row(&[])).unwrap_err().to_string(), "no invocations");
    }

    #[test]
    fn threshold_is_inclusive() {
        // total 1440 -> mean 1, threshold exactly 2.
        let mut counts = vec![1u32; 1440];
        counts[0] = 2;
        counts[1] = 0;
        let r = detect_spikes(&AzureTraceRow::new("t", counts)).unwrap();
        assert_eq!(r.spike_minutes, [0]);
    }

    #[test]
    fn cdf_shape() {
        let cdf = interval_cdf(&[5, 1, 5, 20]);
        assert_eq!(cdf, [(1, 0.25), (5, 0.75), (20, 1.0)]);
        assert_eq!(fraction_longer_than(&[5, 1, 5, 20], 5), 0.25);
    }

    fn ev(t: u64, tenant: u32) -> InvocationEvent {
        InvocationEvent { t_ms: t, tenant_id: tenant, workload_id: 0, trace_id: tenant, seq: 0 }
    }

    #[test]
    fn inject_leaves_active_tenant_alone() {
        let events = merge_streams(vec![vec![ev(10, 0)]]);
        assert_eq!(inject_min_invocation(events.clone(), 0, 0, 0, 0..1000, 5), events);
    }

    #[test]
    fn inject_is_reproducible_and_independent() {
        let base = merge_streams(vec![vec![ev(10, 0)]]);
        let a = inject_min_invocation(base.clone(), 1, 1, 2, 0..60_000, 5);
        let b = inject_min_invocation(base.clone(), 1, 1, 2, 0..60_000, 5);
        assert_eq!(a, b);
        assert_eq!(a.iter().filter(|e| e.tenant_id == 1).count(), 1);
        let c = inject_min_invocation(a, 2, 2, 2, 0..60_000, 5);
        assert_eq!(c.iter().filter(|e| e.tenant_id == 1).count(), 1);
        assert_eq!(c.iter().filter(|e| e.tenant_id == 2).count(), 1);
        assert!(c.windows(2).all(|w| w[0].t_ms < w[1].t_ms));
        assert!(c.iter().enumerate().all(|(i, e)| e.seq == i as u64));
    }

    #[test]
    fn event_file_round_trip_and_order_check() {
        let events = merge_streams(vec![expand_trace(&row(&[2, 1]), 3, 1, 2)]);
        let mut buf = Vec::new();
        write_events(&events, &mut buf).unwrap();
        assert_eq!(read_events(buf.as_slice()).unwrap(), events);
        let err = read_events("5,0,0,0\n5,0,0,0\n".as_bytes()).unwrap_err();
        assert!(matches!(err, TraceError::EventFile { line: 2, .. }), "{err}");
    }

    #[test]
    fn synth_is_deterministic_and_mobile_traces_are_small() {
        let p = SynthParams { traces: 20, mobile_fraction: 0.5, ..Default::default() };
        let a = synthesize(&p, 7);
        assert_eq!(a, synthesize(&p, 7));
        assert_ne!(a, synthesize(&p, 8));
        assert!(a.iter().any(|r| r.kind() == TenantKind::Mobile));
        for r in &a {
            assert_eq!(r.per_minute_counts.len(), MINUTES_PER_DAY);
        }
    }

    #[test]
    fn synth_days_keep_identity() {
        let d1 = synthesize(&SynthParams { traces: 10, mobile_fraction: 0.3, ..Default::default() }, 3);
        let d2 = synthesize(&SynthParams { traces: 10, mobile_fraction: 0.3, day: 2, ..Default::default() }, 3);
        for (a, b) in d1.iter().zip(&d2) {
            assert_eq!(a.key, b.key);
            assert_eq!(a.kind(), b.kind());
        }
        assert_ne!(d1, d2);
    }
}
