//! Eviction-victim selection.
//!
//! Selectors only ever see idle containers; the engine filters busy and
//! restoring ones out before building a candidate list. Every selector is a
//! pure function of its inputs. GDSF threads its inflation clock explicitly
//! and [`Policy`] keeps that clock for the length of one run.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::learn::MlpModel;
use crate::sim::{ContainerId, SimTime};
use crate::trace::TenantId;
use crate::workload::WorkloadId;

#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("no eviction candidates")]
    Empty,
    #[error("learned policy has no model loaded")]
    ModelMissing,
    #[error("expected {expected} state vectors, got {found}")]
    StateCount { expected: usize, found: usize },
    #[error("state vector has dimension {found}, model expects {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("oracle policy needs a look-ahead window")]
    OracleMissing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvictionCandidate {
    pub container_id: ContainerId,
    pub workload_id: WorkloadId,
    /// Tenant owning a warm-pool container; `None` for shared reclaim-pool ones.
    pub owner: Option<TenantId>,
    pub last_used_seq: u64,
    pub last_used_at: SimTime,
    pub idle_since: SimTime,
    pub frequency: u64,
    pub memory_mb: u32,
    pub cold_start_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FutureRequest {
    pub workload_id: WorkloadId,
    pub tenant_id: TenantId,
}

/// The next `window` arrivals, oldest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleContext {
    pub window: usize,
    pub future: Vec<FutureRequest>,
}

impl OracleContext {
    pub fn new(window: usize, future: Vec<FutureRequest>) -> Self {
        debug_assert!(future.len() <= window);
        Self { window, future }
    }

    /// 1-based position of the first future request `c` could serve, or
    /// `window + 1` when it is not needed inside the window. Warm-pool
    /// containers serve only their owner; shared ones serve anyone.
    pub fn reuse_distance(&self, c: &EvictionCandidate) -> usize {
        self.future
            .iter()
            .position(|r| {
                r.workload_id == c.workload_id && c.owner.map_or(true, |o| o == r.tenant_id)
            })
            .map_or(self.window + 1, |i| i + 1)
    }
}

fn lru_key(c: &EvictionCandidate) -> (SimTime, ContainerId) {
    (c.last_used_at, c.container_id)
}

/// Least recently used; ties go to the lower container id.
pub fn lru_select(candidates: &[EvictionCandidate]) -> Result<ContainerId, PolicyError> {
    candidates
        .iter()
        .min_by_key(|c| lru_key(c))
        .map(|c| c.container_id)
        .ok_or(PolicyError::Empty)
}

/// Least frequently used; ties by older use, then lower id.
pub fn lfu_select(candidates: &[EvictionCandidate]) -> Result<ContainerId, PolicyError> {
    candidates
        .iter()
        .min_by_key(|c| (c.frequency, c.last_used_at, c.container_id))
        .map(|c| c.container_id)
        .ok_or(PolicyError::Empty)
}

pub fn gdsf_priority(c: &EvictionCandidate, clock: f64) -> f64 {
    clock + c.frequency as f64 * c.cold_start_ms as f64 / f64::from(c.memory_mb.max(1))
}

/// Greedy-dual-size-frequency: evicts the lowest `clock + freq * cost / size`
/// and advances the clock to the evicted priority.
pub fn gdsf_select(
    candidates: &[EvictionCandidate],
    clock: f64,
) -> Result<(ContainerId, f64), PolicyError> {
    let mut best: Option<(f64, &EvictionCandidate)> = None;
    for c in candidates {
        let p = gdsf_priority(c, clock);
        let better = match best {
            None => true,
            Some((bp, bc)) => p < bp || (p == bp && c.container_id < bc.container_id),
        };
        if better {
            best = Some((p, c));
        }
    }
    let (p, c) = best.ok_or(PolicyError::Empty)?;
    Ok((c.container_id, p.max(clock)))
}

/// Windowed Bélády: evicts the candidate whose next use lies furthest ahead.
/// Candidates not reused inside the window tie at `window + 1` and are
/// separated by LRU order, as are equal finite distances.
pub fn belady_select(
    candidates: &[EvictionCandidate],
    ctx: &OracleContext,
) -> Result<ContainerId, PolicyError> {
    candidates
        .iter()
        .max_by(|a, b| {
            ctx.reuse_distance(a)
                .cmp(&ctx.reuse_distance(b))
                // Older use wins the tie, so reverse the LRU key.
                .then_with(|| lru_key(b).cmp(&lru_key(a)))
        })
        .map(|c| c.container_id)
        .ok_or(PolicyError::Empty)
}

/// Evicts the candidate the model scores most likely to be warm-averse.
pub fn learned_select(
    candidates: &[EvictionCandidate],
    state_vectors: &[Vec<f64>],
    model: &MlpModel,
) -> Result<ContainerId, PolicyError> {
    if candidates.is_empty() {
        return Err(PolicyError::Empty);
    }
    if state_vectors.len() != candidates.len() {
        return Err(PolicyError::StateCount {
            expected: candidates.len(),
            found: state_vectors.len(),
        });
    }
    if let Some(v) = state_vectors.iter().find(|v| v.len() != model.input_dim()) {
        return Err(PolicyError::Dimension { expected: model.input_dim(), found: v.len() });
    }
    if candidates.len() == 1 {
        return Ok(candidates[0].container_id);
    }
    let scores = model.predict_rows(state_vectors);
    Ok(argmax_by_score(candidates, &scores))
}

/// Highest score wins; equal scores go to the lower container id.
pub fn argmax_by_score(candidates: &[EvictionCandidate], scores: &[f64]) -> ContainerId {
    let mut best = 0;
    for i in 1..candidates.len() {
        let (s, bs) = (scores[i], scores[best]);
        if s > bs || (s == bs && candidates[i].container_id < candidates[best].container_id) {
            best = i;
        }
    }
    candidates[best].container_id
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Lru,
    Lfu,
    Gdsf,
    Belady,
    Learned,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 5] =
        [PolicyKind::Lru, PolicyKind::Lfu, PolicyKind::Gdsf, PolicyKind::Belady, PolicyKind::Learned];

    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::Lru => "lru",
            PolicyKind::Lfu => "lfu",
            PolicyKind::Gdsf => "gdsf",
            PolicyKind::Belady => "belady",
            PolicyKind::Learned => "learned",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PolicyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown policy {s:?} (expected lru, lfu, gdsf, belady or learned)"))
    }
}

/// Inputs to one eviction decision. The engine fills `oracle` and `features`
/// only when the policy asks for them.
#[derive(Debug, Clone, Copy)]
pub struct DecisionInput<'a> {
    pub candidates: &'a [EvictionCandidate],
    pub oracle: Option<&'a OracleContext>,
    pub features: Option<&'a [Vec<f64>]>,
}

/// A selector plus its per-run state.
#[derive(Debug, Clone)]
pub struct Policy {
    kind: PolicyKind,
    gdsf_clock: f64,
    model: Option<Arc<MlpModel>>,
}

impl Policy {
    /// Panics for [`PolicyKind::Learned`]; use [`Policy::learned`].
    pub fn new(kind: PolicyKind) -> Self {
        assert!(kind != PolicyKind::Learned, "learned policy needs a model");
        Self { kind, gdsf_clock: 0.0, model: None }
    }

    pub fn learned(model: Arc<MlpModel>) -> Self {
        Self { kind: PolicyKind::Learned, gdsf_clock: 0.0, model: Some(model) }
    }

    pub fn kind(&self) -> PolicyKind {
        self.kind
    }

    pub fn gdsf_clock(&self) -> f64 {
        self.gdsf_clock
    }

    pub fn model(&self) -> Option<&Arc<MlpModel>> {
        self.model.as_ref()
    }

    pub fn needs_oracle(&self) -> bool {
        self.kind == PolicyKind::Belady
    }

    pub fn needs_features(&self) -> bool {
        self.kind == PolicyKind::Learned
    }

    pub fn select(&mut self, input: &DecisionInput<'_>) -> Result<ContainerId, PolicyError> {
        match self.kind {
            PolicyKind::Lru => lru_select(input.candidates),
            PolicyKind::Lfu => lfu_select(input.candidates),
            PolicyKind::Gdsf => {
                let (id, clock) = gdsf_select(input.candidates, self.gdsf_clock)?;
                self.gdsf_clock = clock;
                Ok(id)
            }
            PolicyKind::Belady => {
                belady_select(input.candidates, input.oracle.ok_or(PolicyError::OracleMissing)?)
            }
            PolicyKind::Learned => {
                let model = self.model.as_ref().ok_or(PolicyError::ModelMissing)?;
                learned_select(input.candidates, input.features.unwrap_or(&[]), model)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cand(id: ContainerId, workload: WorkloadId, last_used: SimTime, freq: u64) -> EvictionCandidate {
        EvictionCandidate {
            container_id: id,
            workload_id: workload,
            owner: Some(0),
            last_used_seq: last_used,
            last_used_at: last_used,
            idle_since: last_used,
            frequency: freq,
            memory_mb: 256,
            cold_start_ms: 1000,
        }
    }

    fn req(w: WorkloadId) -> FutureRequest {
        FutureRequest { workload_id: w, tenant_id: 0 }
    }

    #[test]
    fn lru_minimum_and_tie() {
        assert_eq!(lru_select(&[cand(1, 0, 10, 1), cand(2, 0, 5, 1)]), Ok(2));
        assert_eq!(lru_select(&[cand(9, 0, 5, 1), cand(3, 0, 5, 1), cand(4, 0, 5, 1)]), Ok(3));
        assert_eq!(lru_select(&[]), Err(PolicyError::Empty));
    }

    #[test]
    fn lfu_minimum_and_ties() {
        assert_eq!(lfu_select(&[cand(1, 0, 1, 3), cand(2, 0, 1, 1)]), Ok(2));
        assert_eq!(lfu_select(&[cand(1, 0, 10, 2), cand(2, 0, 5, 2)]), Ok(2));
        assert_eq!(lfu_select(&[cand(7, 0, 5, 2), cand(2, 0, 5, 2)]), Ok(2));
        assert_eq!(lfu_select(&[]), Err(PolicyError::Empty));
    }

    #[test]
    fn gdsf_prefers_cheap_restart() {
        let mut a = cand(1, 0, 0, 1);
        a.cold_start_ms = 1000;
        let mut b = cand(2, 1, 0, 1);
        b.cold_start_ms = 4000;
        let (id, clock) = gdsf_select(&[a.clone(), b.clone()], 0.0).unwrap();
        assert_eq!(id, 1);
        approx::assert_abs_diff_eq!(clock, 1000.0 / 256.0, epsilon = 1e-12);
        approx::assert_abs_diff_eq!(gdsf_priority(&b, 0.0), 15.625, epsilon = 1e-12);

        // The clock carries into the next decision and priorities stay above it.
        let (id2, clock2) = gdsf_select(&[b.clone()], clock).unwrap();
        assert_eq!(id2, 2);
        assert!(clock2 >= clock);
        assert!(gdsf_priority(&b, clock) >= clock);
    }

    #[test]
    fn gdsf_identical_candidates_pick_lowest_id() {
        assert_eq!(gdsf_select(&[cand(5, 0, 0, 1), cand(3, 0, 0, 1)], 2.0).unwrap().0, 3);
        assert_eq!(gdsf_select(&[], 0.0), Err(PolicyError::Empty));
    }

    #[test]
    fn belady_worked_example() {
        // Cache {A, B}; D arrives; future C A D B -> A reused at 3, B at 4.
        let (a, b, c) = (0, 1, 2);
        let ctx = OracleContext::new(30, vec![req(c), req(c), req(a), req(b)]);
        let cands = [cand(10, a, 0, 1), cand(11, b, 0, 1)];
        assert_eq!(ctx.reuse_distance(&cands[0]), 3);
        assert_eq!(ctx.reuse_distance(&cands[1]), 4);
        assert_eq!(belady_select(&cands, &ctx), Ok(11));
    }

    #[test]
    fn belady_never_reused_beats_finite() {
        let ctx = OracleContext::new(5, vec![req(1), req(1)]);
        let cands = [cand(1, 1, 0, 1), cand(2, 7, 100, 1)];
        assert_eq!(ctx.reuse_distance(&cands[1]), 6);
        assert_eq!(belady_select(&cands, &ctx), Ok(2));
    }

    #[test]
    fn belady_infinity_ties_fall_back_to_lru() {
        let ctx = OracleContext::new(5, vec![]);
        let cands = [cand(1, 1, 50, 1), cand(2, 2, 10, 1), cand(3, 3, 10, 1)];
        assert_eq!(belady_select(&cands, &ctx), Ok(2));
    }

    #[test]
    fn belady_respects_ownership() {
        let ctx = OracleContext::new(
            4,
            vec![FutureRequest { workload_id: 0, tenant_id: 9 }, FutureRequest { workload_id: 1, tenant_id: 0 }],
        );
        // Tenant 0's container for workload 0 cannot serve tenant 9.
        let private = cand(1, 0, 0, 1);
        let mut shared = cand(2, 0, 0, 1);
        shared.owner = None;
        assert_eq!(ctx.reuse_distance(&private), 5);
        assert_eq!(ctx.reuse_distance(&shared), 1);
    }

    #[test]
    fn learned_argmax_and_ties() {
        let cands = [cand(4, 0, 0, 1), cand(2, 0, 0, 1)];
        assert_eq!(argmax_by_score(&cands, &[0.2, 0.9]), 2);
        assert_eq!(argmax_by_score(&cands, &[0.9, 0.2]), 4);
        assert_eq!(argmax_by_score(&cands, &[0.5, 0.5]), 2);
    }

    #[test]
    fn learned_single_candidate_and_zero_model() {
        let model = MlpModel::zeros(&[3, 4, 1]);
        let cands = [cand(8, 0, 0, 1)];
        assert_eq!(learned_select(&cands, &[vec![1.0, 2.0, 3.0]], &model), Ok(8));
        let cands = [cand(8, 0, 0, 1), cand(5, 0, 9, 1), cand(6, 0, 3, 1)];
        let vecs = vec![vec![1.0, 0.0, 0.0], vec![0.0, 5.0, 0.0], vec![0.0, 0.0, -2.0]];
        assert_eq!(learned_select(&cands, &vecs, &model), Ok(5));
    }

    #[test]
    fn learned_rejects_bad_inputs() {
        let model = MlpModel::zeros(&[3, 1]);
        let cands = [cand(1, 0, 0, 1)];
        assert_eq!(
            learned_select(&cands, &[vec![0.0; 2]], &model),
            Err(PolicyError::Dimension { expected: 3, found: 2 })
        );
        assert_eq!(
            learned_select(&cands, &[], &model),
            Err(PolicyError::StateCount { expected: 1, found: 0 })
        );
        let mut p = Policy { kind: PolicyKind::Learned, gdsf_clock: 0.0, model: None };
        let input = DecisionInput { candidates: &cands, oracle: None, features: None };
        assert_eq!(p.select(&input), Err(PolicyError::ModelMissing));
    }

    #[test]
    fn policy_names_round_trip() {
        for k in PolicyKind::ALL {
            assert_eq!(k.name().parse::<PolicyKind>(), Ok(k));
        }
        assert!("mru".parse::<PolicyKind>().is_err());
    }

    fn arb_candidates() -> impl Strategy<Value = Vec<EvictionCandidate>> {
        prop::collection::vec((0u32..4, 0u64..20, 0u64..5, 1u64..5000), 1..8).prop_map(|v| {
            v.into_iter()
                .enumerate()
                .map(|(i, (w, t, f, cold))| {
                    let mut c = cand(i as ContainerId * 3 + 1, w, t, f);
                    c.cold_start_ms = cold;
                    c
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn selectors_match_exhaustive_scans(
            cands in arb_candidates(),
            future in prop::collection::vec(0u32..5, 0..10),
            clock in 0.0f64..100.0,
        ) {
            // Independent linear scans.
            let mut lru = &cands[0];
            let mut lfu = &cands[0];
            for c in &cands {
                if (c.last_used_at, c.container_id) < (lru.last_used_at, lru.container_id) { lru = c; }
                if (c.frequency, c.last_used_at, c.container_id) < (lfu.frequency, lfu.last_used_at, lfu.container_id) { lfu = c; }
            }
            prop_assert_eq!(lru_select(&cands).unwrap(), lru.container_id);
            prop_assert_eq!(lfu_select(&cands).unwrap(), lfu.container_id);

            let (g, new_clock) = gdsf_select(&cands, clock).unwrap();
            prop_assert!(new_clock >= clock);
            prop_assert!(cands.iter().any(|c| c.container_id == g));
            for c in &cands {
                prop_assert!(gdsf_priority(c, clock) >= new_clock - 1e-9);
            }

            let window = 10;
            let ctx = OracleContext::new(window, future.iter().map(|&w| req(w)).collect());
            let dist = |c: &EvictionCandidate| {
                let mut d = window + 1;
                for (i, r) in future.iter().enumerate() {
                    if *r == c.workload_id { d = i + 1; break; }
                }
                d
            };
            let chosen = belady_select(&cands, &ctx).unwrap();
            let chosen_c = cands.iter().find(|c| c.container_id == chosen).unwrap();
            let max_d = cands.iter().map(dist).max().unwrap();
            prop_assert_eq!(dist(chosen_c), max_d);
            for c in cands.iter().filter(|c| dist(c) == max_d) {
                prop_assert!((chosen_c.last_used_at, chosen_c.container_id) <= (c.last_used_at, c.container_id));
            }
        }
    }
}
