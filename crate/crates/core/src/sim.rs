//! Deterministic discrete-event engine for one serverless node.
//!
//! Containers move through a small FSM:
//!
//! ```text
//! Starting -> (Checkpointing) -> Busy -> PausedWarm -> Busy
//!                                           |  \-> Destroyed
//!                                           v
//!                                       Restoring -> PausedReclaim -> Busy
//!                                                                 \-> Destroyed
//! ```
//!
//! Idle containers live in two pools. The warm pool is tenant-private; the
//! reclaim pool holds containers restored to a clean checkpoint that any
//! tenant may reuse for the same workload. A request first looks for a warm
//! container of its own, then a reclaim container of the same workload, and
//! otherwise goes through [`Engine`]'s provisioning path: create, evict then
//! create, or (when every slot is busy) drop or buffer.
//!
//! Time is kept in microseconds so fractional-millisecond costs stay exact.
//! Events at the same instant are ordered Completion, RestoreDone,
//! WarmExpiry, ReclaimExpiry, Arrival, then by insertion.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, PolicyScope, Saturation, SimConfig};
use crate::features::{FeatureEncoder, FeatureError, StateTracker};
use crate::policies::{
    DecisionInput, EvictionCandidate, FutureRequest, OracleContext, Policy, PolicyError, PolicyKind,
};
use crate::trace::{InvocationEvent, TenantId};
use crate::workload::{WorkloadCatalog, WorkloadId};

/// Simulated time in microseconds.
pub type SimTime = u64;
pub type ContainerId = u64;

pub const US_PER_MS: u64 = 1_000;

pub fn ms_to_time(ms: u64) -> SimTime {
    ms * US_PER_MS
}

pub fn fractional_ms_to_time(ms: f64) -> SimTime {
    (ms * US_PER_MS as f64).round() as SimTime
}

pub fn time_to_ms(t: SimTime) -> f64 {
    t as f64 / US_PER_MS as f64
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("event {index}: t_ms {t_ms} does not increase")]
    EventsNotIncreasing { index: usize, t_ms: u64 },
    #[error("event seq {seq}: unknown workload {workload}")]
    UnknownWorkload { seq: u64, workload: WorkloadId },
    #[error("container {id}: illegal transition {from} -> {to}")]
    IllegalTransition { id: ContainerId, from: ContainerState, to: ContainerState },
    #[error("invariant violated at t={t_us}us: {detail}")]
    Invariant { t_us: SimTime, detail: String },
    #[error("policy: {0}")]
    Policy(#[from] PolicyError),
    #[error("state tracker: {0}")]
    Feature(#[from] FeatureError),
}

impl SimError {
    pub fn is_invariant_breach(&self) -> bool {
        matches!(
            self,
            SimError::Invariant { .. } | SimError::IllegalTransition { .. } | SimError::Policy(_) | SimError::Feature(_)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ContainerState {
    Starting,
    Checkpointing,
    Busy,
    PausedWarm,
    Restoring,
    PausedReclaim,
    Destroyed,
}

impl ContainerState {
    pub fn can_become(self, to: ContainerState) -> bool {
        use ContainerState::*;
        matches!(
            (self, to),
            (Starting, Checkpointing)
                | (Starting, Busy)
                | (Checkpointing, Busy)
                | (Busy, PausedWarm)
                | (PausedWarm, Busy)
                | (PausedWarm, Restoring)
                | (PausedWarm, Destroyed)
                | (Restoring, PausedReclaim)
                | (PausedReclaim, Busy)
                | (PausedReclaim, Destroyed)
        )
    }

    /// Occupies the busy pool.
    pub fn is_busy(self) -> bool {
        matches!(self, ContainerState::Starting | ContainerState::Checkpointing | ContainerState::Busy)
    }

    pub fn is_idle(self) -> bool {
        matches!(self, ContainerState::PausedWarm | ContainerState::PausedReclaim)
    }
}

impl fmt::Display for ContainerState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Owner {
    Tenant(TenantId),
    Shared,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContainerRecord {
    pub container_id: ContainerId,
    pub workload_id: WorkloadId,
    pub owner: Owner,
    pub state: ContainerState,
    pub created_seq: u64,
    pub last_used_seq: u64,
    pub last_used_at: SimTime,
    pub idle_since: SimTime,
    pub frequency: u64,
    /// End of the current service; 0 when idle.
    pub busy_until: SimTime,
    /// Bumped on every state change so timers from an earlier idle period
    /// can be recognised as stale.
    epoch: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OutcomeKind {
    WarmFromWarmPool,
    WarmFromReclaim,
    ColdStart,
    DroppedAsCold,
}

impl OutcomeKind {
    pub fn is_warm(self) -> bool {
        matches!(self, OutcomeKind::WarmFromWarmPool | OutcomeKind::WarmFromReclaim)
    }

    pub fn name(self) -> &'static str {
        match self {
            OutcomeKind::WarmFromWarmPool => "warm",
            OutcomeKind::WarmFromReclaim => "reclaim",
            OutcomeKind::ColdStart => "cold",
            OutcomeKind::DroppedAsCold => "dropped",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestOutcome {
    pub event: InvocationEvent,
    pub kind: OutcomeKind,
    pub container_id: Option<ContainerId>,
    pub wait_ms: f64,
    pub init_ms: f64,
    pub exec_ms: f64,
    pub response_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EventKind {
    Completion,
    RestoreDone,
    WarmExpiry,
    ReclaimExpiry,
    Arrival,
}

/// A scheduled timer. Arrivals are read straight from the input stream and
/// never enter the timer heap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct SimEvent {
    pub t: SimTime,
    pub kind: EventKind,
    pub order: u64,
    pub container_id: ContainerId,
    epoch: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PoolKind {
    Warm,
    Reclaim,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueueSample {
    pub t: SimTime,
    pub len: usize,
}

/// One policy-driven eviction, captured for training-data generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub seq: u64,
    pub pool: PoolKind,
    pub candidates: Vec<EvictionCandidate>,
    /// Encoded model inputs, one row per candidate.
    pub features: Vec<Vec<f64>>,
    pub chosen: usize,
}

/// Everything a run produced.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub seed: u64,
    pub outcomes: Vec<RequestOutcome>,
    pub queue_log: Vec<QueueSample>,
    pub start: SimTime,
    /// Last arrival or completion.
    pub end: SimTime,
    pub decisions: Vec<DecisionRecord>,
    pub evictions: u64,
    pub demotions: u64,
    pub restores: u64,
    pub max_live: usize,
    pub max_reclaim_idle: usize,
    pub invariant_checks: u64,
}

enum Step {
    Served,
    Buffered,
}

pub struct Engine<'a> {
    cfg: SimConfig,
    catalog: &'a WorkloadCatalog,
    events: &'a [InvocationEvent],
    policy: Policy,
    warm_fallback: Policy,
    encoder: FeatureEncoder,
    now: SimTime,
    next_arrival: usize,
    containers: Vec<ContainerRecord>,
    next_id: ContainerId,
    timers: BinaryHeap<Reverse<SimEvent>>,
    timer_order: u64,
    buffer: VecDeque<InvocationEvent>,
    last_buffered_served: Option<u64>,
    checkpointed: Vec<bool>,
    tracker: StateTracker,
    check: bool,
    log: RunLog,
}

/// Runs `events` to quiescence.
pub fn run(
    events: &[InvocationEvent],
    cfg: &SimConfig,
    catalog: &WorkloadCatalog,
    policy: Policy,
    seed: u64,
) -> Result<RunLog, SimError> {
    Engine::new(events, cfg.clone(), catalog, policy, seed)?.run()
}

impl<'a> Engine<'a> {
    pub fn new(
        events: &'a [InvocationEvent],
        cfg: SimConfig,
        catalog: &'a WorkloadCatalog,
        policy: Policy,
        seed: u64,
    ) -> Result<Self, SimError> {
        cfg.pool.validate()?;
        for (index, pair) in events.windows(2).enumerate() {
            if pair[1].t_ms <= pair[0].t_ms {
                return Err(SimError::EventsNotIncreasing { index: index + 1, t_ms: pair[1].t_ms });
            }
        }
        if let Some(e) = events.iter().find(|e| catalog.get(e.workload_id).is_none()) {
            return Err(SimError::UnknownWorkload { seq: e.seq, workload: e.workload_id });
        }
        let start = events.first().map_or(0, |e| ms_to_time(e.t_ms));
        let check = cfg!(debug_assertions) || cfg.check_invariants;
        Ok(Self {
            encoder: FeatureEncoder::new(catalog.len()),
            cfg,
            catalog,
            events,
            policy,
            warm_fallback: Policy::new(PolicyKind::Lru),
            now: start,
            next_arrival: 0,
            containers: Vec::new(),
            next_id: 0,
            timers: BinaryHeap::new(),
            timer_order: 0,
            buffer: VecDeque::new(),
            last_buffered_served: None,
            checkpointed: vec![false; catalog.len()],
            tracker: StateTracker::new(),
            check,
            log: RunLog { seed, start, end: start, ..Default::default() },
        })
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    /// Live containers ordered by id.
    pub fn containers(&self) -> &[ContainerRecord] {
        &self.containers
    }

    pub fn container(&self, id: ContainerId) -> Option<&ContainerRecord> {
        self.containers.iter().find(|c| c.container_id == id)
    }

    pub fn buffer_len(&self) -> usize {
        self.buffer.len()
    }

    pub fn log(&self) -> &RunLog {
        &self.log
    }

    pub fn policy(&self) -> &Policy {
        &self.policy
    }

    pub fn count(&self, state: ContainerState) -> usize {
        self.containers.iter().filter(|c| c.state == state).count()
    }

    fn busy_count(&self) -> usize {
        self.containers.iter().filter(|c| c.state.is_busy()).count()
    }

    pub fn run(mut self) -> Result<RunLog, SimError> {
        while self.step()? {}
        if !self.buffer.is_empty() {
            return self.breach(format!("{} requests still buffered at quiescence", self.buffer.len()));
        }
        if self.log.outcomes.len() != self.events.len() {
            return self.breach(format!(
                "{} outcomes for {} requests",
                self.log.outcomes.len(),
                self.events.len()
            ));
        }
        Ok(self.log)
    }

    /// Processes everything scheduled at or before `t`.
    pub fn run_until(&mut self, t: SimTime) -> Result<(), SimError> {
        while self.peek_time().is_some_and(|next| next <= t) {
            self.step()?;
        }
        Ok(())
    }

    fn peek_time(&self) -> Option<SimTime> {
        let timer = self.timers.peek().map(|Reverse(e)| e.t);
        let arrival = self.events.get(self.next_arrival).map(|e| ms_to_time(e.t_ms));
        match (timer, arrival) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }

    /// Processes one event; returns `false` once nothing is left.
    pub fn step(&mut self) -> Result<bool, SimError> {
        let arrival_t = self.events.get(self.next_arrival).map(|e| ms_to_time(e.t_ms));
        let timer_first = match (self.timers.peek(), arrival_t) {
            (Some(Reverse(timer)), Some(at)) => timer.t <= at,
            (Some(_), None) => true,
            (None, Some(_)) => false,
            (None, None) => return Ok(false),
        };
        if timer_first {
            let Reverse(timer) = self.timers.pop().expect("peeked");
            self.now = timer.t;
            self.fire(timer)?;
        } else {
            let event = self.events[self.next_arrival];
            self.next_arrival += 1;
            self.now = ms_to_time(event.t_ms);
            self.log.end = self.log.end.max(self.now);
            self.arrival(event)?;
        }
        if self.check {
            self.check_invariants()?;
        }
        Ok(true)
    }

    fn schedule(&mut self, t: SimTime, kind: EventKind, id: ContainerId) {
        let epoch = self.container(id).map_or(0, |c| c.epoch);
        self.timer_order += 1;
        self.timers.push(Reverse(SimEvent { t, kind, order: self.timer_order, container_id: id, epoch }));
    }

    fn index_of(&self, id: ContainerId) -> Option<usize> {
        self.containers.binary_search_by_key(&id, |c| c.container_id).ok()
    }

    fn transition(&mut self, idx: usize, to: ContainerState) -> Result<(), SimError> {
        let c = &mut self.containers[idx];
        if !c.state.can_become(to) {
            return Err(SimError::IllegalTransition { id: c.container_id, from: c.state, to });
        }
        c.state = to;
        c.epoch += 1;
        Ok(())
    }

    fn breach<T>(&self, detail: String) -> Result<T, SimError> {
        Err(SimError::Invariant { t_us: self.now, detail })
    }

    fn fire(&mut self, timer: SimEvent) -> Result<(), SimError> {
        let Some(idx) = self.index_of(timer.container_id) else {
            return Ok(());
        };
        if self.containers[idx].epoch != timer.epoch {
            return Ok(());
        }
        match timer.kind {
            EventKind::Completion => self.complete(timer.container_id)?,
            EventKind::RestoreDone => self.restore_done(timer.container_id)?,
            EventKind::WarmExpiry | EventKind::ReclaimExpiry => self.expire(timer.container_id, timer.kind)?,
            EventKind::Arrival => unreachable!("arrivals are not timers"),
        }
        self.drain_buffer()
    }

    fn arrival(&mut self, event: InvocationEvent) -> Result<(), SimError> {
        self.tracker.observe_arrival(&event)?;
        if !self.buffer.is_empty() && self.cfg.saturation == Saturation::Buffer {
            // Strict FIFO: nobody overtakes a waiting request.
            self.enqueue_back(event);
            return self.drain_buffer();
        }
        self.step_arrival(event, false).map(|_| ())
    }

    fn enqueue_back(&mut self, event: InvocationEvent) {
        self.buffer.push_back(event);
        self.log.queue_log.push(QueueSample { t: self.now, len: self.buffer.len() });
    }

    fn drain_buffer(&mut self) -> Result<(), SimError> {
        while let Some(event) = self.buffer.pop_front() {
            self.log.queue_log.push(QueueSample { t: self.now, len: self.buffer.len() });
            match self.step_arrival(event, true)? {
                Step::Served => {
                    if self.last_buffered_served.is_some_and(|s| s >= event.seq) {
                        return self.breach(format!("buffered request {} served out of order", event.seq));
                    }
                    self.last_buffered_served = Some(event.seq);
                }
                Step::Buffered => break,
            }
        }
        Ok(())
    }

    /// Serves `event` from the warm pool, then the reclaim pool, then by
    /// provisioning.
    fn step_arrival(&mut self, event: InvocationEvent, from_buffer: bool) -> Result<Step, SimError> {
        if let Some(id) = self.find_idle(&event, PoolKind::Warm) {
            self.serve_idle(id, event, OutcomeKind::WarmFromWarmPool)?;
            return Ok(Step::Served);
        }
        if self.cfg.pool.reclaim_enabled {
            if let Some(id) = self.find_idle(&event, PoolKind::Reclaim) {
                self.serve_idle(id, event, OutcomeKind::WarmFromReclaim)?;
                return Ok(Step::Served);
            }
        }
        self.provision(event, from_buffer)
    }

    /// Most recently idled matching container.
    fn find_idle(&self, event: &InvocationEvent, pool: PoolKind) -> Option<ContainerId> {
        self.containers
            .iter()
            .filter(|c| c.workload_id == event.workload_id)
            .filter(|c| match pool {
                PoolKind::Warm => {
                    c.state == ContainerState::PausedWarm && c.owner == Owner::Tenant(event.tenant_id)
                }
                PoolKind::Reclaim => c.state == ContainerState::PausedReclaim,
            })
            .max_by_key(|c| (c.idle_since, c.container_id))
            .map(|c| c.container_id)
    }

    fn serve_idle(&mut self, id: ContainerId, event: InvocationEvent, kind: OutcomeKind) -> Result<(), SimError> {
        let idx = self.index_of(id).expect("live container");
        self.transition(idx, ContainerState::Busy)?;
        let exec = ms_to_time(self.catalog.get(event.workload_id).expect("validated").exec_ms);
        let now = self.now;
        let c = &mut self.containers[idx];
        c.owner = Owner::Tenant(event.tenant_id);
        c.frequency += 1;
        c.last_used_seq = event.seq;
        c.last_used_at = now;
        c.busy_until = now + exec;
        self.tracker.observe_service(id, &event)?;
        self.record(event, kind, Some(id), now, 0, exec);
        self.schedule(now + exec, EventKind::Completion, id);
        Ok(())
    }

    fn record(
        &mut self,
        event: InvocationEvent,
        kind: OutcomeKind,
        id: Option<ContainerId>,
        start: SimTime,
        init: SimTime,
        exec: SimTime,
    ) {
        let wait_ms = time_to_ms(start.saturating_sub(ms_to_time(event.t_ms)));
        let (init_ms, exec_ms) = (time_to_ms(init), time_to_ms(exec));
        self.log.outcomes.push(RequestOutcome {
            event,
            kind,
            container_id: id,
            wait_ms,
            init_ms,
            exec_ms,
            response_ms: wait_ms + init_ms + exec_ms,
        });
    }

    /// The container-provision procedure for a request with no idle match.
    fn provision(&mut self, event: InvocationEvent, from_buffer: bool) -> Result<Step, SimError> {
        let max = self.cfg.pool.max_containers;
        let busy = self.busy_count();
        if busy >= max {
            return Ok(self.saturated(event, from_buffer));
        }
        let warm = self.count(ContainerState::PausedWarm);
        let reclaim = self.count(ContainerState::PausedReclaim);
        let restoring = self.count(ContainerState::Restoring);
        let free = max - busy;
        let evict_from = if free > warm + reclaim + restoring {
            None
        } else if warm > 0 {
            Some(if reclaim > 0 { PoolKind::Reclaim } else { PoolKind::Warm })
        } else if reclaim > 0 {
            Some(PoolKind::Reclaim)
        } else {
            // Every non-busy slot is mid-restore; nothing can be evicted yet.
            return Ok(self.saturated(event, from_buffer));
        };
        let mut delay = 0;
        if let Some(pool) = evict_from {
            let victim = self.choose_victim(pool, &event, true)?;
            self.destroy(victim)?;
            self.log.evictions += 1;
            delay = fractional_ms_to_time(self.cfg.pool.eviction_decision_cost_ms);
        }
        self.create(event, delay)?;
        Ok(Step::Served)
    }

    fn saturated(&mut self, event: InvocationEvent, from_buffer: bool) -> Step {
        match self.cfg.saturation {
            Saturation::Drop => {
                self.record(event, OutcomeKind::DroppedAsCold, None, ms_to_time(event.t_ms), 0, 0);
                Step::Served
            }
            Saturation::Buffer => {
                if from_buffer {
                    self.buffer.push_front(event);
                    self.log.queue_log.push(QueueSample { t: self.now, len: self.buffer.len() });
                } else {
                    self.enqueue_back(event);
                }
                Step::Buffered
            }
        }
    }

    fn candidates(&self, pool: PoolKind) -> Vec<EvictionCandidate> {
        let state = match pool {
            PoolKind::Warm => ContainerState::PausedWarm,
            PoolKind::Reclaim => ContainerState::PausedReclaim,
        };
        self.containers
            .iter()
            .filter(|c| c.state == state)
            .map(|c| {
                let w = self.catalog.get(c.workload_id).expect("validated");
                EvictionCandidate {
                    container_id: c.container_id,
                    workload_id: c.workload_id,
                    owner: match c.owner {
                        Owner::Tenant(t) => Some(t),
                        Owner::Shared => None,
                    },
                    last_used_seq: c.last_used_seq,
                    last_used_at: c.last_used_at,
                    idle_since: c.idle_since,
                    frequency: c.frequency,
                    memory_mb: w.memory_mb,
                    cold_start_ms: w.cold_start_ms,
                }
            })
            .collect()
    }

    /// Requests known to be coming: waiting ones first, then the stream.
    fn oracle_context(&self) -> OracleContext {
        let w = self.cfg.oracle_window;
        let future = self
            .buffer
            .iter()
            .chain(self.events[self.next_arrival..].iter())
            .take(w)
            .map(|e| FutureRequest { workload_id: e.workload_id, tenant_id: e.tenant_id })
            .collect();
        OracleContext::new(w, future)
    }

    fn choose_victim(
        &mut self,
        pool: PoolKind,
        current: &InvocationEvent,
        is_eviction: bool,
    ) -> Result<ContainerId, SimError> {
        let candidates = self.candidates(pool);
        // The scope setting only narrows the learned policy.
        let use_fallback = pool == PoolKind::Warm
            && self.cfg.scope == PolicyScope::Reclaim
            && self.policy.kind() == PolicyKind::Learned;
        let recording = self.cfg.record_decisions && is_eviction && !use_fallback;
        let policy = if use_fallback { &self.warm_fallback } else { &self.policy };

        let oracle = policy.needs_oracle().then(|| self.oracle_context());
        let features = if policy.needs_features() || recording {
            let (sys, containers) = self.tracker.snapshot(&candidates, current)?;
            Some(self.encoder.encode(&sys, &containers))
        } else {
            None
        };
        let input = DecisionInput {
            candidates: &candidates,
            oracle: oracle.as_ref(),
            features: features.as_deref(),
        };
        let chosen = if use_fallback {
            self.warm_fallback.select(&input)?
        } else {
            self.policy.select(&input)?
        };
        let Some(pos) = candidates.iter().position(|c| c.container_id == chosen) else {
            return self.breach(format!("policy chose {chosen}, not a candidate"));
        };
        if self.check {
            for c in &candidates {
                let state = self.container(c.container_id).map(|r| r.state);
                if !state.is_some_and(ContainerState::is_idle) {
                    return self.breach(format!("candidate {} in state {state:?}", c.container_id));
                }
            }
        }
        if recording {
            self.log.decisions.push(DecisionRecord {
                seq: current.seq,
                pool,
                candidates,
                features: features.unwrap_or_default(),
                chosen: pos,
            });
        }
        Ok(chosen)
    }

    fn create(&mut self, event: InvocationEvent, delay: SimTime) -> Result<(), SimError> {
        let w = self.catalog.get(event.workload_id).expect("validated").clone();
        let id = self.next_id;
        self.next_id += 1;
        let start = self.now + delay;
        self.containers.push(ContainerRecord {
            container_id: id,
            workload_id: w.id,
            owner: Owner::Tenant(event.tenant_id),
            state: ContainerState::Starting,
            created_seq: event.seq,
            last_used_seq: event.seq,
            last_used_at: start,
            idle_since: start,
            frequency: 1,
            busy_until: 0,
            epoch: 0,
        });
        let idx = self.containers.len() - 1;
        let mut init = ms_to_time(w.cold_start_ms);
        if self.cfg.pool.reclaim_enabled && !self.checkpointed[w.id as usize] {
            // The checkpoint is built by a side container outside the slot cap;
            // the first request of the workload pays its extra latency once.
            self.transition(idx, ContainerState::Checkpointing)?;
            self.checkpointed[w.id as usize] = true;
            init += ms_to_time(w.checkpoint_extra_ms);
        }
        self.transition(idx, ContainerState::Busy)?;
        let exec = ms_to_time(w.exec_ms);
        self.containers[idx].busy_until = start + init + exec;
        self.tracker.container_created(id);
        self.tracker.observe_service(id, &event)?;
        self.record(event, OutcomeKind::ColdStart, Some(id), start, init, exec);
        self.schedule(start + init + exec, EventKind::Completion, id);
        Ok(())
    }

    fn destroy(&mut self, id: ContainerId) -> Result<(), SimError> {
        let idx = self.index_of(id).expect("live container");
        self.transition(idx, ContainerState::Destroyed)?;
        self.containers.remove(idx);
        self.tracker.container_destroyed(id);
        Ok(())
    }

    /// A busy container finished: park it in its tenant's warm pool and, if
    /// the warm pool is over its idle budget, demote one warm container.
    fn complete(&mut self, id: ContainerId) -> Result<(), SimError> {
        let idx = self.index_of(id).expect("live container");
        if self.containers[idx].busy_until != self.now {
            return self.breach(format!("container {id} completed off schedule"));
        }
        self.transition(idx, ContainerState::PausedWarm)?;
        let c = &mut self.containers[idx];
        c.idle_since = self.now;
        c.busy_until = 0;
        self.log.end = self.log.end.max(self.now);
        self.schedule(self.now + ms_to_time(self.cfg.pool.warm_keepalive_ms), EventKind::WarmExpiry, id);

        let pool = &self.cfg.pool;
        if pool.reclaim_enabled && self.count(ContainerState::PausedWarm) > pool.warm_idle_limit() {
            let current = self.events[self.next_arrival.saturating_sub(1)];
            let victim = self.choose_victim(PoolKind::Warm, &current, false)?;
            self.log.demotions += 1;
            self.begin_restore(victim)?;
        }
        Ok(())
    }

    /// Moves a warm container toward the reclaim pool, or destroys it when
    /// the reclaim pool (counting in-flight restores) is full.
    fn begin_restore(&mut self, id: ContainerId) -> Result<(), SimError> {
        let pool = &self.cfg.pool;
        let occupied = self.count(ContainerState::PausedReclaim) + self.count(ContainerState::Restoring);
        if !pool.reclaim_enabled || occupied >= pool.reclaim_capacity {
            return self.destroy(id);
        }
        let idx = self.index_of(id).expect("live container");
        self.transition(idx, ContainerState::Restoring)?;
        self.containers[idx].owner = Owner::Shared;
        self.log.restores += 1;
        let done = self.now + fractional_ms_to_time(self.cfg.pool.restore_cost_ms);
        self.schedule(done, EventKind::RestoreDone, id);
        Ok(())
    }

    fn restore_done(&mut self, id: ContainerId) -> Result<(), SimError> {
        let idx = self.index_of(id).expect("live container");
        self.transition(idx, ContainerState::PausedReclaim)?;
        let now = self.now;
        let c = &mut self.containers[idx];
        c.idle_since = now;
        c.last_used_at = now;
        c.frequency = 0;
        self.tracker.container_reset(id)?;
        self.schedule(now + ms_to_time(self.cfg.pool.reclaim_keepalive_ms), EventKind::ReclaimExpiry, id);
        Ok(())
    }

    fn expire(&mut self, id: ContainerId, kind: EventKind) -> Result<(), SimError> {
        let state = self.container(id).map(|c| c.state);
        match (kind, state) {
            (EventKind::WarmExpiry, Some(ContainerState::PausedWarm)) => {
                if self.cfg.pool.reclaim_enabled {
                    self.begin_restore(id)
                } else {
                    self.destroy(id)
                }
            }
            (EventKind::ReclaimExpiry, Some(ContainerState::PausedReclaim)) => self.destroy(id),
            _ => Ok(()),
        }
    }

    fn check_invariants(&mut self) -> Result<(), SimError> {
        self.log.invariant_checks += 1;
        let pool = &self.cfg.pool;
        let live = self.containers.len();
        let reclaim_idle = self.count(ContainerState::PausedReclaim);
        self.log.max_live = self.log.max_live.max(live);
        self.log.max_reclaim_idle = self.log.max_reclaim_idle.max(reclaim_idle);
        if live > pool.max_containers {
            return self.breach(format!("{live} live containers exceed {}", pool.max_containers));
        }
        if reclaim_idle > pool.reclaim_capacity {
            return self.breach(format!("{reclaim_idle} reclaim containers exceed {}", pool.reclaim_capacity));
        }
        for c in &self.containers {
            let shared = c.owner == Owner::Shared;
            let reclaim_state = matches!(c.state, ContainerState::PausedReclaim | ContainerState::Restoring);
            if shared != reclaim_state {
                return self.breach(format!("container {} is {:?} in state {}", c.container_id, c.owner, c.state));
            }
            if c.state.is_busy() != (c.busy_until >= self.now && c.busy_until > 0) {
                return self.breach(format!("container {} busy_until inconsistent with {}", c.container_id, c.state));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::PoolConfig;
    use crate::workload::Workload;

    const S: u64 = 1_000; // one second in ms

    fn catalog() -> WorkloadCatalog {
        WorkloadCatalog::new(
            (0..3)
                .map(|i| Workload {
                    id: i,
                    name: format!("w{i}"),
                    cold_start_ms: 500,
                    exec_ms: 100,
                    memory_mb: 256,
                    checkpoint_extra_ms: 0,
                })
                .collect(),
        )
        .unwrap()
    }

    fn ev(t_ms: u64, tenant: TenantId, w: WorkloadId) -> InvocationEvent {
        InvocationEvent { t_ms, tenant_id: tenant, workload_id: w, trace_id: tenant, seq: 0 }
    }

    fn stream(mut events: Vec<InvocationEvent>) -> Vec<InvocationEvent> {
        for (i, e) in events.iter_mut().enumerate() {
            e.seq = i as u64;
        }
        events
    }

    fn cfg(pool: PoolConfig) -> SimConfig {
        SimConfig { pool, check_invariants: true, ..SimConfig::default() }
    }

    fn kinds(log: &RunLog) -> Vec<OutcomeKind> {
        log.outcomes.iter().map(|o| o.kind).collect()
    }

    fn lru() -> Policy {
        Policy::new(PolicyKind::Lru)
    }

    use OutcomeKind::*;

    #[test]
    fn empty_run() {
        let log = run(&[], &cfg(PoolConfig::vanilla(4)), &catalog(), lru(), 0).unwrap();
        assert!(log.outcomes.is_empty());
    }

    #[test]
    fn one_request_is_cold() {
        let events = stream(vec![ev(0, 0, 0)]);
        let log = run(&events, &cfg(PoolConfig::vanilla(4)), &catalog(), lru(), 0).unwrap();
        assert_eq!(kinds(&log), [ColdStart]);
        let o = &log.outcomes[0];
        assert_eq!((o.init_ms, o.exec_ms, o.wait_ms, o.response_ms), (500.0, 100.0, 0.0, 600.0));
    }

    #[test]
    fn second_identical_request_is_warm() {
        let events = stream(vec![ev(0, 0, 0), ev(S, 0, 0)]);
        let log = run(&events, &cfg(PoolConfig::vanilla(4)), &catalog(), lru(), 0).unwrap();
        assert_eq!(kinds(&log), [ColdStart, WarmFromWarmPool]);
        assert_eq!(log.outcomes[1].init_ms, 0.0);
    }

    #[test]
    fn warm_pool_is_tenant_private() {
        let events = stream(vec![ev(0, 0, 0), ev(S, 1, 0)]);
        let log = run(&events, &cfg(PoolConfig::vanilla(4)), &catalog(), lru(), 0).unwrap();
        assert_eq!(kinds(&log), [ColdStart, ColdStart]);
    }

    fn tiered(warm: usize, reclaim: usize) -> PoolConfig {
        PoolConfig { warm_keepalive_ms: 10 * S, reclaim_keepalive_ms: 10 * S, ..PoolConfig::tiered(warm, reclaim) }
    }

    #[test]
    fn reclaim_pool_is_shared_across_tenants() {
        // Tenant 0's container expires from the warm pool after 10 s, restores
        // (430 ms) and then serves tenant 1.
        let events = stream(vec![ev(0, 0, 0), ev(20 * S, 1, 0)]);
        let log = run(&events, &cfg(tiered(2, 1)), &catalog(), lru(), 0).unwrap();
        assert_eq!(kinds(&log), [ColdStart, WarmFromReclaim]);
        // Once more after the second request idles out.
        assert_eq!(log.restores, 2);
    }

    #[test]
    fn restore_timeline() {
        let events = stream(vec![ev(0, 0, 0)]);
        let c = cfg(tiered(2, 1));
        let cat = catalog();
        let mut e = Engine::new(&events, c, &cat, lru(), 0).unwrap();
        // Idle from 600 ms, warm expiry at 10.6 s, restore done at 11.03 s.
        e.run_until(ms_to_time(10_600)).unwrap();
        assert_eq!(e.containers()[0].state, ContainerState::Restoring);
        assert_eq!(e.containers()[0].owner, Owner::Shared);
        e.run_until(ms_to_time(11_029)).unwrap();
        assert_eq!(e.containers()[0].state, ContainerState::Restoring);
        e.run_until(ms_to_time(11_030)).unwrap();
        assert_eq!(e.containers()[0].state, ContainerState::PausedReclaim);
        assert_eq!(e.containers()[0].frequency, 0);
        let log = e.run().unwrap();
        assert_eq!(log.outcomes.len(), 1);
    }

    #[test]
    fn full_reclaim_pool_destroys_instead() {
        // Two containers expire; the reclaim pool holds one.
        let events = stream(vec![ev(0, 0, 0), ev(1, 1, 1)]);
        let cat = catalog();
        let mut e = Engine::new(&events, cfg(tiered(3, 1)), &cat, lru(), 0).unwrap();
        e.run_until(ms_to_time(10_602)).unwrap();
        let states: Vec<_> = e.containers().iter().map(|c| c.state).collect();
        assert_eq!(states, [ContainerState::Restoring]);
        e.run().unwrap();
    }

    #[test]
    fn arrival_during_restore_takes_the_cold_path() {
        let events = stream(vec![ev(0, 0, 0), ev(10_800, 1, 0)]);
        let log = run(&events, &cfg(tiered(2, 1)), &catalog(), lru(), 0).unwrap();
        assert_eq!(kinds(&log), [ColdStart, ColdStart]);
    }

    #[test]
    fn saturation_buffers_fifo() {
        // One slot, three back-to-back requests for different workloads.
        let events = stream(vec![ev(0, 0, 0), ev(10, 0, 1), ev(20, 0, 2)]);
        let log = run(&events, &cfg(PoolConfig::vanilla(1)), &catalog(), lru(), 0).unwrap();
        let served: Vec<u64> = log.outcomes.iter().map(|o| o.event.seq).collect();
        assert_eq!(served, [0, 1, 2]);
        assert_eq!(kinds(&log), [ColdStart, ColdStart, ColdStart]);
        // Second waits for the first (done at 600 ms), third for the second.
        assert_eq!(log.outcomes[1].wait_ms, 590.0);
        assert_eq!(log.outcomes[2].wait_ms, 1180.0);
        assert_eq!(log.evictions, 2);
        assert_eq!(log.queue_log.iter().map(|q| q.len).max(), Some(2));
    }

    #[test]
    fn saturation_drops_when_configured() {
        let events = stream(vec![ev(0, 0, 0), ev(10, 0, 1)]);
        let c = SimConfig { saturation: Saturation::Drop, ..cfg(PoolConfig::vanilla(1)) };
        let log = run(&events, &c, &catalog(), lru(), 0).unwrap();
        assert_eq!(kinds(&log), [ColdStart, DroppedAsCold]);
        let d = &log.outcomes[1];
        assert_eq!((d.init_ms, d.response_ms), (0.0, 0.0));
    }

    #[test]
    fn completion_precedes_arrival_at_same_instant() {
        // Container finishes at exactly 600 ms, when the next request lands.
        let events = stream(vec![ev(0, 0, 0), ev(600, 0, 0)]);
        let log = run(&events, &cfg(PoolConfig::vanilla(1)), &catalog(), lru(), 0).unwrap();
        assert_eq!(kinds(&log), [ColdStart, WarmFromWarmPool]);
        assert_eq!(log.outcomes[1].wait_ms, 0.0);
    }

    #[test]
    fn creates_without_eviction_when_space_remains() {
        let events = stream(vec![ev(0, 0, 0), ev(S, 0, 1)]);
        let log = run(&events, &cfg(PoolConfig::vanilla(2)), &catalog(), lru(), 0).unwrap();
        assert_eq!(log.evictions, 0);
        assert_eq!(log.max_live, 2);
    }

    #[test]
    fn eviction_prefers_reclaim_pool() {
        // 2-1 pool. Tenant 0/w0 becomes a reclaim container at ~11 s; two more
        // warm containers fill the node; w2 then forces an eviction.
        let events = stream(vec![ev(0, 0, 0), ev(12 * S, 0, 1), ev(13 * S, 0, 2), ev(14 * S, 1, 2)]);
        let cat = catalog();
        let mut e = Engine::new(&events, cfg(tiered(2, 1)), &cat, lru(), 0).unwrap();
        e.run_until(ms_to_time(13 * S + 1)).unwrap();
        assert_eq!(e.count(ContainerState::PausedReclaim), 1);
        assert_eq!(e.count(ContainerState::PausedWarm), 1);
        e.run_until(ms_to_time(14 * S)).unwrap();
        // Busy w2(tenant1) + warm w1 + warm w2(tenant0) ... the reclaim one went.
        assert_eq!(e.count(ContainerState::PausedReclaim), 0);
        assert!(e.containers().iter().all(|c| c.workload_id != 0));
        e.run().unwrap();
    }

    #[test]
    fn vanilla_keepalive_destroys() {
        let events = stream(vec![ev(0, 0, 0)]);
        let cat = catalog();
        let mut e = Engine::new(&events, cfg(PoolConfig::vanilla(2)), &cat, lru(), 0).unwrap();
        e.run_until(ms_to_time(600 + 10 * 60 * S - 1)).unwrap();
        assert_eq!(e.containers().len(), 1);
        e.run_until(ms_to_time(600 + 10 * 60 * S)).unwrap();
        assert!(e.containers().is_empty());
    }

    #[test]
    fn reuse_before_expiry_makes_old_timer_stale() {
        let mut pool = PoolConfig::vanilla(2);
        pool.warm_keepalive_ms = 5 * 60 * S;
        // Idle at 600 ms; reused at 600 + 4:59; idle again 100 ms later.
        let reuse = 600 + 5 * 60 * S - S;
        let events = stream(vec![ev(0, 0, 0), ev(reuse, 0, 0)]);
        let cat = catalog();
        let mut e = Engine::new(&events, cfg(pool), &cat, lru(), 0).unwrap();
        e.run_until(ms_to_time(600 + 5 * 60 * S + 10)).unwrap();
        assert_eq!(e.containers().len(), 1, "first timer must be stale");
        e.run_until(ms_to_time(reuse + 100 + 5 * 60 * S)).unwrap();
        assert!(e.containers().is_empty());
        let log = e.run().unwrap();
        assert_eq!(kinds(&log), [ColdStart, WarmFromWarmPool]);
    }

    #[test]
    fn reclaim_cycle_repeats() {
        // Serve from reclaim, idle again, demote again, serve from reclaim again.
        let events = stream(vec![ev(0, 0, 0), ev(20 * S, 1, 0), ev(40 * S, 2, 0)]);
        let log = run(&events, &cfg(tiered(2, 1)), &catalog(), lru(), 0).unwrap();
        assert_eq!(kinds(&log), [ColdStart, WarmFromReclaim, WarmFromReclaim]);
        assert_eq!(log.restores, 3);
    }

    #[test]
    fn warm_overflow_demotes() {
        // 1-1 pool: two warm containers exceed the warm idle budget of 1.
        let events = stream(vec![ev(0, 0, 0), ev(10, 0, 1)]);
        let log = run(&events, &cfg(tiered(1, 1)), &catalog(), lru(), 0).unwrap();
        assert_eq!(log.demotions, 1);
    }

    #[test]
    fn checkpoint_charged_once_per_workload() {
        let mut cat: Vec<Workload> = catalog().iter().cloned().collect();
        cat[0].checkpoint_extra_ms = 300;
        let cat = WorkloadCatalog::new(cat).unwrap();
        let events = stream(vec![ev(0, 0, 0), ev(10, 1, 0)]);
        let log = run(&events, &cfg(tiered(2, 1)), &cat, lru(), 0).unwrap();
        assert_eq!(log.outcomes[0].init_ms, 800.0);
        assert_eq!(log.outcomes[1].init_ms, 500.0);
        let vanilla = run(&events, &cfg(PoolConfig::vanilla(3)), &cat, lru(), 0).unwrap();
        assert_eq!(vanilla.outcomes[0].init_ms, 500.0);
    }

    #[test]
    fn eviction_decision_cost_adds_to_wait() {
        let mut pool = PoolConfig::vanilla(1);
        pool.eviction_decision_cost_ms = 38.63;
        let events = stream(vec![ev(0, 0, 0), ev(S, 0, 1)]);
        let log = run(&events, &cfg(pool), &catalog(), lru(), 0).unwrap();
        approx::assert_abs_diff_eq!(log.outcomes[1].wait_ms, 38.63, epsilon = 1e-9);
        approx::assert_abs_diff_eq!(log.outcomes[1].response_ms, 638.63, epsilon = 1e-9);
    }

    #[test]
    fn rejects_bad_streams() {
        let cat = catalog();
        let events = stream(vec![ev(5, 0, 0), ev(5, 0, 0)]);
        assert!(matches!(
            run(&events, &cfg(PoolConfig::vanilla(1)), &cat, lru(), 0),
            Err(SimError::EventsNotIncreasing { index: 1, .. })
        ));
        let events = stream(vec![ev(5, 0, 9)]);
        assert!(matches!(
            run(&events, &cfg(PoolConfig::vanilla(1)), &cat, lru(), 0),
            Err(SimError::UnknownWorkload { workload: 9, .. })
        ));
    }

    #[test]
    fn transition_table() {
        use ContainerState::*;
        assert!(Starting.can_become(Checkpointing));
        assert!(PausedWarm.can_become(Restoring));
        assert!(!Busy.can_become(Destroyed));
        assert!(!Restoring.can_become(Busy));
        assert!(!PausedReclaim.can_become(PausedWarm));
    }

    #[test]
    fn recorded_decisions_carry_features() {
        let events = stream(vec![ev(0, 0, 0), ev(S, 0, 1), ev(2 * S, 0, 2)]);
        let c = SimConfig { record_decisions: true, ..cfg(PoolConfig::vanilla(2)) };
        let log = run(&events, &c, &catalog(), Policy::new(PolicyKind::Belady), 0).unwrap();
        assert_eq!(log.decisions.len(), 1);
        let d = &log.decisions[0];
        assert_eq!(d.candidates.len(), 2);
        assert_eq!(d.features.len(), 2);
        assert_eq!(d.candidates[d.chosen].container_id, 0);
    }

    #[test]
    fn identical_inputs_give_identical_logs() {
        let events = stream((0..200).map(|i| ev(i * 137, (i % 3) as u32, ((i * 7 + i / 5) % 3) as u32)).collect());
        let c = cfg(tiered(2, 1));
        let a = run(&events, &c, &catalog(), Policy::new(PolicyKind::Gdsf), 3).unwrap();
        let b = run(&events, &c, &catalog(), Policy::new(PolicyKind::Gdsf), 3).unwrap();
        assert_eq!(a, b);
    }
}
