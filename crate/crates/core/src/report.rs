//! Run summaries and cross-system comparison tables.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::{time_to_ms, OutcomeKind, RunLog};

pub const DEFAULT_WINDOW_MS: u64 = 20 * 60_000;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("system {system} in scenario {scenario} ran seeds {found:?}, expected {expected:?}")]
    MismatchedSeeds { system: String, scenario: String, expected: Vec<u64>, found: Vec<u64> },
    #[error("system {system} in scenario {scenario} has seed {seed} twice")]
    DuplicateRun { system: String, scenario: String, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub total_requests: u64,
    pub warm_from_warm: u64,
    pub warm_from_reclaim: u64,
    pub cold_starts: u64,
    pub dropped: u64,
    pub warm_rate_pct: f64,
    pub window_ms: u64,
    /// Cold starts plus drops per window of arrival time, from t = 0.
    pub cold_per_window: Vec<u64>,
    /// Means over served (not dropped) requests.
    pub mean_response_ms: f64,
    pub mean_wait_ms: f64,
    pub mean_init_ms: f64,
    pub mean_exec_ms: f64,
    /// Buffer length averaged over simulated time.
    pub mean_queue_size: f64,
    pub max_queue_size: u64,
    pub evictions: u64,
    pub demotions: u64,
    pub restores: u64,
}

/// Summarises one run. Pure in the log.
pub fn summarize(log: &RunLog, window_ms: u64) -> SimulationReport {
    let window_ms = window_ms.max(1);
    let count = |k: OutcomeKind| log.outcomes.iter().filter(|o| o.kind == k).count() as u64;
    let total = log.outcomes.len() as u64;
    let warm = count(OutcomeKind::WarmFromWarmPool);
    let reclaim = count(OutcomeKind::WarmFromReclaim);

    let mut cold_per_window = Vec::new();
    if let Some(last) = log.outcomes.iter().map(|o| o.event.t_ms).max() {
        cold_per_window = vec![0; (last / window_ms) as usize + 1];
    }
    for o in &log.outcomes {
        if matches!(o.kind, OutcomeKind::ColdStart | OutcomeKind::DroppedAsCold) {
            cold_per_window[(o.event.t_ms / window_ms) as usize] += 1;
        }
    }

    let served: Vec<_> = log.outcomes.iter().filter(|o| o.kind != OutcomeKind::DroppedAsCold).collect();
    let mean = |f: &dyn Fn(&crate::sim::RequestOutcome) -> f64| {
        if served.is_empty() {
            0.0
        } else {
            served.iter().map(|o| f(o)).sum::<f64>() / served.len() as f64
        }
    };

    let (mean_queue_size, max_queue_size) = queue_stats(log);
    SimulationReport {
        total_requests: total,
        warm_from_warm: warm,
        warm_from_reclaim: reclaim,
        cold_starts: count(OutcomeKind::ColdStart),
        dropped: count(OutcomeKind::DroppedAsCold),
        warm_rate_pct: if total == 0 { 0.0 } else { 100.0 * (warm + reclaim) as f64 / total as f64 },
        window_ms,
        cold_per_window,
        mean_response_ms: mean(&|o| o.response_ms),
        mean_wait_ms: mean(&|o| o.wait_ms),
        mean_init_ms: mean(&|o| o.init_ms),
        mean_exec_ms: mean(&|o| o.exec_ms),
        mean_queue_size,
        max_queue_size,
        evictions: log.evictions,
        demotions: log.demotions,
        restores: log.restores,
    }
}

fn queue_stats(log: &RunLog) -> (f64, u64) {
    let max = log.queue_log.iter().map(|q| q.len as u64).max().unwrap_or(0);
    let span = log.end.saturating_sub(log.start);
    if span == 0 {
        return (0.0, max);
    }
    let (mut area, mut t, mut len) = (0.0, log.start, 0usize);
    for q in &log.queue_log {
        let at = q.t.clamp(log.start, log.end);
        area += (at - t) as f64 * len as f64;
        t = at;
        len = q.len;
    }
    area += (log.end - t) as f64 * len as f64;
    (area / span as f64, max)
}

const REPORT_FIELDS: [&str; 17] = [
    "total_requests",
    "warm_from_warm",
    "warm_from_reclaim",
    "cold_starts",
    "dropped",
    "warm_rate_pct",
    "window_ms",
    "cold_per_window",
    "mean_response_ms",
    "mean_wait_ms",
    "mean_init_ms",
    "mean_exec_ms",
    "mean_queue_size",
    "max_queue_size",
    "evictions",
    "demotions",
    "restores",
];

impl SimulationReport {
    fn values(&self) -> Vec<String> {
        let windows: Vec<String> = self.cold_per_window.iter().map(u64::to_string).collect();
        vec![
            self.total_requests.to_string(),
            self.warm_from_warm.to_string(),
            self.warm_from_reclaim.to_string(),
            self.cold_starts.to_string(),
            self.dropped.to_string(),
            format!("{:.4}", self.warm_rate_pct),
            self.window_ms.to_string(),
            windows.join(";"),
            format!("{:.4}", self.mean_response_ms),
            format!("{:.4}", self.mean_wait_ms),
            format!("{:.4}", self.mean_init_ms),
            format!("{:.4}", self.mean_exec_ms),
            format!("{:.6}", self.mean_queue_size),
            self.max_queue_size.to_string(),
            self.evictions.to_string(),
            self.demotions.to_string(),
            self.restores.to_string(),
        ]
    }

    /// Header plus one row; `cold_per_window` is `;`-separated.
    pub fn write_csv<W: Write>(&self, out: W) -> io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(REPORT_FIELDS)?;
        w.write_record(self.values())?;
        w.flush()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in REPORT_FIELDS.iter().zip(self.values()) {
            let _ = writeln!(s, "{k:<18} {v}");
        }
        s
    }

    pub fn write_cold_windows_csv<W: Write>(&self, out: W) -> io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["window", "start_min", "cold_starts"])?;
        for (i, c) in self.cold_per_window.iter().enumerate() {
            let start_min = i as u64 * self.window_ms / 60_000;
            w.write_record([i.to_string(), start_min.to_string(), c.to_string()])?;
        }
        w.flush()
    }
}

/// Writes one line per request.
pub fn write_outcomes_csv<W: Write>(log: &RunLog, out: W) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "seq", "t_ms", "tenant", "workload", "trace", "outcome", "container", "wait_ms", "init_ms", "exec_ms",
        "response_ms",
    ])?;
    for o in &log.outcomes {
        w.write_record([
            o.event.seq.to_string(),
            o.event.t_ms.to_string(),
            o.event.tenant_id.to_string(),
            o.event.workload_id.to_string(),
            o.event.trace_id.to_string(),
            o.kind.name().to_string(),
            o.container_id.map_or_else(String::new, |c| c.to_string()),
            format!("{:.3}", o.wait_ms),
            format!("{:.3}", o.init_ms),
            format!("{:.3}", o.exec_ms),
            format!("{:.3}", o.response_ms),
        ])?;
    }
    w.flush()
}

/// One run of one system on one seeded trace set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub system: String,
    pub scenario: String,
    pub seed: u64,
    pub report: SimulationReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub system: String,
    pub scenario: String,
    pub runs: usize,
    pub mean_warm_rate_pct: f64,
    /// Seeds on which this system had the strictly highest warm rate.
    pub wins: usize,
    /// Per-request mean within a run, then mean across runs.
    pub mean_response_ms: f64,
    pub mean_queue_size: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

/// Aggregates runs per (system, scenario). Rows keep first-appearance order.
pub fn compare(runs: &[RunRecord]) -> Result<ComparisonTable, ReportError> {
    let mut order: Vec<(String, String)> = Vec::new();
    let mut groups: BTreeMap<(String, String), BTreeMap<u64, &SimulationReport>> = BTreeMap::new();
    for r in runs {
        let key = (r.system.clone(), r.scenario.clone());
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        if groups.entry(key).or_default().insert(r.seed, &r.report).is_some() {
            return Err(ReportError::DuplicateRun {
                system: r.system.clone(),
                scenario: r.scenario.clone(),
                seed: r.seed,
            });
        }
    }

    let mut seeds_of: BTreeMap<&str, BTreeSet<u64>> = BTreeMap::new();
    for (system, scenario) in &order {
        let seeds: BTreeSet<u64> = groups[&(system.clone(), scenario.clone())].keys().copied().collect();
        match seeds_of.get(scenario.as_str()) {
            Some(expected) if *expected != seeds => {
                return Err(ReportError::MismatchedSeeds {
                    system: system.clone(),
                    scenario: scenario.clone(),
                    expected: expected.iter().copied().collect(),
                    found: seeds.into_iter().collect(),
                })
            }
            Some(_) => {}
            None => {
                seeds_of.insert(scenario, seeds);
            }
        }
    }

    let mut wins: BTreeMap<(String, String), usize> = BTreeMap::new();
    for (scenario, seeds) in &seeds_of {
        let systems: Vec<&(String, String)> = order.iter().filter(|k| k.1 == *scenario).collect();
        for seed in seeds {
            let rates: Vec<f64> = systems.iter().map(|k| groups[*k][seed].warm_rate_pct).collect();
            let best = rates.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let leaders: Vec<usize> = (0..rates.len()).filter(|&i| rates[i] == best).collect();
            if let [only] = leaders[..] {
                *wins.entry(systems[only].clone()).or_default() += 1;
            }
        }
    }

    let rows = order
        .iter()
        .map(|key| {
            let reports: Vec<&&SimulationReport> = groups[key].values().collect();
            let n = reports.len() as f64;
            let avg = |f: &dyn Fn(&SimulationReport) -> f64| reports.iter().map(|r| f(r)).sum::<f64>() / n;
            ComparisonRow {
                system: key.0.clone(),
                scenario: key.1.clone(),
                runs: reports.len(),
                mean_warm_rate_pct: avg(&|r| r.warm_rate_pct),
                wins: wins.get(key).copied().unwrap_or(0),
                mean_response_ms: avg(&|r| r.mean_response_ms),
                mean_queue_size: avg(&|r| r.mean_queue_size),
            }
        })
        .collect();
    Ok(ComparisonTable { rows })
}

impl ComparisonTable {
    pub fn row(&self, system: &str, scenario: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.system == system && r.scenario == scenario)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "system",
            "scenario",
            "runs",
            "mean_warm_rate_pct",
            "wins",
            "mean_response_ms",
            "mean_queue_size",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.system.clone(),
                r.scenario.clone(),
                r.runs.to_string(),
                format!("{:.4}", r.mean_warm_rate_pct),
                r.wins.to_string(),
                format!("{:.4}", r.mean_response_ms),
                format!("{:.6}", r.mean_queue_size),
            ])?;
        }
        w.flush()
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "{:<24} {:<8} {:>5} {:>10} {:>5} {:>14} {:>11}\n",
            "system", "scenario", "runs", "warm %", "wins", "response ms", "queue"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<24} {:<8} {:>5} {:>10.2} {:>5} {:>14.1} {:>11.3}",
                r.system, r.scenario, r.runs, r.mean_warm_rate_pct, r.wins, r.mean_response_ms, r.mean_queue_size
            );
        }
        s
    }
}

/// Span of a run in milliseconds, for diagnostics.
pub fn run_span_ms(log: &RunLog) -> f64 {
    time_to_ms(log.end.saturating_sub(log.start))
}
