//! Trace-driven discrete-event simulator for a resource-limited, multi-tenant
//! serverless node.
//!
//! The node keeps idle containers in two tiers: a per-tenant warm pool and a
//! shared reclaim pool whose containers are restored to a clean checkpoint
//! before any tenant may reuse them. Eviction victims are chosen by pluggable
//! policies (LRU, LFU, GDSF, a windowed Bélády oracle, and a learned
//! classifier trained to imitate the oracle).
//!
//! Module map:
//! - [`trace`]: Azure-format per-minute counts, event expansion, tenants, spikes.
//! - [`sim`]: the container FSM, pools, timers, request buffer and provisioning.
//! - [`policies`]: eviction-victim selectors.
//! - [`features`]: the state tracker producing model inputs.
//! - [`learn`]: oracle-labelled data, the MLP, training and model files.
//! - [`report`]: run summaries and cross-system comparison tables.
//! - [`experiment`]: scenario builders shared by the CLI, tests and benches.

pub mod cli;
pub mod config;
pub mod experiment;
pub mod features;
pub mod learn;
pub mod par;
pub mod policies;
pub mod report;
pub mod rng;
pub mod sim;
pub mod trace;
pub mod workload;

pub use config::{PoolConfig, Saturation, SimConfig};
pub use policies::{EvictionCandidate, Policy, PolicyKind};
pub use report::{ComparisonTable, SimulationReport};
pub use sim::{Engine, OutcomeKind, RequestOutcome, RunLog, SimError};
pub use trace::{AzureTraceRow, InvocationEvent, Scenario, TenantKind, TenantProfile};
pub use workload::{Workload, WorkloadCatalog};
