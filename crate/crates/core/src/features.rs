//! State tracking for the learned eviction policy.
//!
//! The tracker is a deterministic fold over arrivals and services. Intervals
//! are measured in arrivals rather than wall time. At an eviction decision it
//! emits one system vector (shared by every candidate) and one container
//! vector per idle candidate; [`FeatureEncoder`] flattens and scales the pair
//! into the 212-value model input.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::policies::EvictionCandidate;
use crate::sim::{ContainerId, SimTime};
use crate::trace::InvocationEvent;
use crate::workload::WorkloadId;

pub const HISTORY_LEN: usize = 200;
pub const SYSTEM_DIM: usize = 3 + HISTORY_LEN;
pub const CONTAINER_DIM: usize = 9;
pub const FEATURE_DIM: usize = SYSTEM_DIM + CONTAINER_DIM;
/// Marks an undefined interval or an empty history slot.
pub const SENTINEL: i64 = -1;

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("arrival seq {seq} observed after seq {last}")]
    OutOfOrder { seq: u64, last: u64 },
    #[error("unknown container {0}")]
    UnknownContainer(ContainerId),
    #[error("snapshot needs at least one candidate")]
    NoCandidates,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemStateVector {
    pub current_workload_id: WorkloadId,
    /// Arrivals since the current workload was last served.
    pub pii1: i64,
    /// Arrivals between its two previous services.
    pub pii2: i64,
    /// Workload ids of the last 200 arrivals, most recent last, front-padded
    /// with [`SENTINEL`].
    pub history200: Vec<i64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContainerStateVector {
    pub workload_id: WorkloadId,
    /// 0 = idle the longest among the candidates.
    pub idle_rank: u32,
    pub frequency: u64,
    /// 0 = most frequently used among the candidates.
    pub freq_rank: u32,
    pub alive_count: u64,
    pub warm_count: u64,
    pub past10: u32,
    pub past50: u32,
    pub past100: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct ContainerCounters {
    /// Arrival count when the container was created or last restored.
    born_at: u64,
    served_at: Option<u64>,
    frequency: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct ServiceMarks {
    last: Option<u64>,
    previous: Option<u64>,
}

#[derive(Debug, Clone, Default)]
pub struct StateTracker {
    history: VecDeque<WorkloadId>,
    arrivals: u64,
    last_seq: Option<u64>,
    services: Vec<ServiceMarks>,
    containers: BTreeMap<ContainerId, ContainerCounters>,
}

impl StateTracker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn arrivals(&self) -> u64 {
        self.arrivals
    }

    pub fn observe_arrival(&mut self, event: &InvocationEvent) -> Result<(), FeatureError> {
        if let Some(last) = self.last_seq {
            if event.seq <= last {
                return Err(FeatureError::OutOfOrder { seq: event.seq, last });
            }
        }
        self.last_seq = Some(event.seq);
        self.arrivals += 1;
        if self.history.len() == HISTORY_LEN {
            self.history.pop_front();
        }
        self.history.push_back(event.workload_id);
        Ok(())
    }

    /// Starts counters for a new container at zero.
    pub fn container_created(&mut self, id: ContainerId) {
        self.containers.insert(id, ContainerCounters { born_at: self.arrivals, ..Default::default() });
    }

    /// Restoring a container to its checkpoint wipes its statistics.
    pub fn container_reset(&mut self, id: ContainerId) -> Result<(), FeatureError> {
        let c = self.containers.get_mut(&id).ok_or(FeatureError::UnknownContainer(id))?;
        *c = ContainerCounters { born_at: self.arrivals, ..Default::default() };
        Ok(())
    }

    pub fn container_destroyed(&mut self, id: ContainerId) {
        self.containers.remove(&id);
    }

    pub fn observe_service(&mut self, id: ContainerId, event: &InvocationEvent) -> Result<(), FeatureError> {
        let arrivals = self.arrivals;
        let c = self.containers.get_mut(&id).ok_or(FeatureError::UnknownContainer(id))?;
        c.frequency += 1;
        c.served_at = Some(arrivals);
        let w = event.workload_id as usize;
        if self.services.len() <= w {
            self.services.resize(w + 1, ServiceMarks::default());
        }
        let marks = &mut self.services[w];
        marks.previous = marks.last;
        marks.last = Some(event.seq);
        Ok(())
    }

    pub fn frequency(&self, id: ContainerId) -> Option<u64> {
        self.containers.get(&id).map(|c| c.frequency)
    }

    pub fn alive_count(&self, id: ContainerId) -> Option<u64> {
        self.containers.get(&id).map(|c| self.arrivals - c.born_at)
    }

    pub fn warm_count(&self, id: ContainerId) -> Option<u64> {
        self.containers
            .get(&id)
            .map(|c| self.arrivals - c.served_at.unwrap_or(c.born_at))
    }

    /// (PII1, PII2) for `event`'s workload, [`SENTINEL`] where undefined.
    pub fn piis(&self, event: &InvocationEvent) -> (i64, i64) {
        let marks = self
            .services
            .get(event.workload_id as usize)
            .copied()
            .unwrap_or_default();
        let gap = |later: u64, earlier: u64| later.saturating_sub(earlier).saturating_sub(1) as i64;
        let pii1 = marks.last.map_or(SENTINEL, |l| gap(event.seq, l));
        let pii2 = match (marks.last, marks.previous) {
            (Some(l), Some(p)) => gap(l, p),
            _ => SENTINEL,
        };
        (pii1, pii2)
    }

    /// Occurrences of `workload` among the most recent `k` arrivals.
    pub fn recent_count(&self, workload: WorkloadId, k: usize) -> u32 {
        self.history.iter().rev().take(k).filter(|&&w| w == workload).count() as u32
    }

    pub fn system_vector(&self, current: &InvocationEvent) -> SystemStateVector {
        let (pii1, pii2) = self.piis(current);
        let mut history200 = vec![SENTINEL; HISTORY_LEN - self.history.len()];
        history200.extend(self.history.iter().map(|&w| i64::from(w)));
        SystemStateVector { current_workload_id: current.workload_id, pii1, pii2, history200 }
    }

    /// Builds the state vectors for one eviction decision. Ranks are computed
    /// over exactly `candidates`.
    pub fn snapshot(
        &self,
        candidates: &[EvictionCandidate],
        current: &InvocationEvent,
    ) -> Result<(SystemStateVector, Vec<ContainerStateVector>), FeatureError> {
        if candidates.is_empty() {
            return Err(FeatureError::NoCandidates);
        }
        let counters: Vec<&ContainerCounters> = candidates
            .iter()
            .map(|c| {
                self.containers
                    .get(&c.container_id)
                    .ok_or(FeatureError::UnknownContainer(c.container_id))
            })
            .collect::<Result<_, _>>()?;

        let n = candidates.len();
        let mut by_idle: Vec<usize> = (0..n).collect();
        by_idle.sort_by_key(|&i| (candidates[i].idle_since, candidates[i].container_id));
        let mut by_freq: Vec<usize> = (0..n).collect();
        by_freq.sort_by_key(|&i| (std::cmp::Reverse(counters[i].frequency), candidates[i].container_id));
        let mut idle_rank = vec![0u32; n];
        let mut freq_rank = vec![0u32; n];
        for (rank, &i) in by_idle.iter().enumerate() {
            idle_rank[i] = rank as u32;
        }
        for (rank, &i) in by_freq.iter().enumerate() {
            freq_rank[i] = rank as u32;
        }

        let containers = candidates
            .iter()
            .zip(&counters)
            .enumerate()
            .map(|(i, (c, k))| ContainerStateVector {
                workload_id: c.workload_id,
                idle_rank: idle_rank[i],
                frequency: k.frequency,
                freq_rank: freq_rank[i],
                alive_count: self.arrivals - k.born_at,
                warm_count: self.arrivals - k.served_at.unwrap_or(k.born_at),
                past10: self.recent_count(c.workload_id, 10),
                past50: self.recent_count(c.workload_id, 50),
                past100: self.recent_count(c.workload_id, 100),
            })
            .collect();
        Ok((self.system_vector(current), containers))
    }
}

/// Idle duration of a candidate at `now`, for diagnostics.
pub fn idle_for(c: &EvictionCandidate, now: SimTime) -> SimTime {
    now.saturating_sub(c.idle_since)
}

/// Flattens and scales state vectors into model inputs.
///
/// Workload ids are divided by the workload count, ranks by the candidate
/// count, sliding-window counts by their window, and open-ended counts
/// (intervals, frequency, alive/warm counts) by 200 after clipping at 1000.
/// Sentinels stay at -1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureEncoder {
    pub num_workloads: usize,
}

impl FeatureEncoder {
    pub fn new(num_workloads: usize) -> Self {
        Self { num_workloads: num_workloads.max(1) }
    }

    fn workload(&self, w: i64) -> f64 {
        if w < 0 {
            -1.0
        } else {
            w as f64 / self.num_workloads as f64
        }
    }

    fn open_count(x: i64) -> f64 {
        if x < 0 {
            -1.0
        } else {
            x.min(1000) as f64 / HISTORY_LEN as f64
        }
    }

    pub fn encode_system(&self, sys: &SystemStateVector, out: &mut Vec<f64>) {
        out.push(self.workload(i64::from(sys.current_workload_id)));
        out.push(Self::open_count(sys.pii1));
        out.push(Self::open_count(sys.pii2));
        out.extend(sys.history200.iter().map(|&w| self.workload(w)));
    }

    pub fn encode_container(&self, c: &ContainerStateVector, candidates: usize, out: &mut Vec<f64>) {
        let n = candidates.max(1) as f64;
        let clip = |x: u64| Self::open_count(x.min(i64::MAX as u64) as i64);
        out.push(self.workload(i64::from(c.workload_id)));
        out.push(f64::from(c.idle_rank) / n);
        out.push(clip(c.frequency));
        out.push(f64::from(c.freq_rank) / n);
        out.push(clip(c.alive_count));
        out.push(clip(c.warm_count));
        out.push(f64::from(c.past10) / 10.0);
        out.push(f64::from(c.past50) / 50.0);
        out.push(f64::from(c.past100) / 100.0);
    }

    /// One [`FEATURE_DIM`]-long row per container vector.
    pub fn encode(&self, sys: &SystemStateVector, containers: &[ContainerStateVector]) -> Vec<Vec<f64>> {
        let mut prefix = Vec::with_capacity(SYSTEM_DIM);
        self.encode_system(sys, &mut prefix);
        containers
            .iter()
            .map(|c| {
                let mut row = Vec::with_capacity(FEATURE_DIM);
                row.extend_from_slice(&prefix);
                self.encode_container(c, containers.len(), &mut row);
                row
            })
            .collect()
    }
}

/// Column names of the flat feature row, in order.
pub fn feature_names() -> Vec<String> {
    let mut names = vec!["current_workload".to_string(), "pii1".into(), "pii2".into()];
    names.extend((0..HISTORY_LEN).map(|i| format!("hist_{i}")));
    names.extend(
        [
            "workload_id",
            "idle_rank",
            "frequency",
            "freq_rank",
            "alive_count",
            "warm_count",
            "past10",
            "past50",
            "past100",
        ]
        .map(String::from),
    );
    names
}
