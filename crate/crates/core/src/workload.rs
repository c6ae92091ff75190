//! Function types hosted on the node.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type WorkloadId = u32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Workload {
    pub id: WorkloadId,
    pub name: String,
    pub cold_start_ms: u64,
    pub exec_ms: u64,
    pub memory_mb: u32,
    /// Extra latency paid by the first cold start of this workload when a
    /// clean checkpoint has to be built.
    pub checkpoint_extra_ms: u64,
}

#[derive(Debug, Error, PartialEq)]
pub enum WorkloadError {
    #[error("workload {id}: {field} must be positive")]
    NonPositive { id: WorkloadId, field: &'static str },
    #[error("workload at index {index} has id {id}; ids must equal their index")]
    BadId { index: usize, id: WorkloadId },
    #[error("catalog is empty")]
    Empty,
}

impl Workload {
    pub fn validate(&self) -> Result<(), WorkloadError> {
        let id = self.id;
        if self.cold_start_ms == 0 {
            return Err(WorkloadError::NonPositive { id, field: "cold_start_ms" });
        }
        if self.exec_ms == 0 {
            return Err(WorkloadError::NonPositive { id, field: "exec_ms" });
        }
        if self.memory_mb == 0 {
            return Err(WorkloadError::NonPositive { id, field: "memory_mb" });
        }
        Ok(())
    }
}

/// Dense catalog: workload `i` lives at index `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadCatalog {
    workloads: Vec<Workload>,
}

impl WorkloadCatalog {
    pub fn new(workloads: Vec<Workload>) -> Result<Self, WorkloadError> {
        if workloads.is_empty() {
            return Err(WorkloadError::Empty);
        }
        for (index, w) in workloads.iter().enumerate() {
            if w.id as usize != index {
                return Err(WorkloadError::BadId { index, id: w.id });
            }
            w.validate()?;
        }
        Ok(Self { workloads })
    }

    /// Eight function types shaped after a common serverless benchmark mix:
    /// arithmetic kernels, linear algebra, crypto, ML training/serving, HTML
    /// rendering and image processing. All use 256 MB containers.
    pub fn standard() -> Self {
        const MIX: [(&str, u64, u64); 8] = [
            ("float_operation", 1_100, 60),
            ("linpack", 1_500, 900),
            ("matmul", 1_400, 1_200),
            ("pyaes", 1_200, 450),
            ("model_training", 3_800, 4_500),
            ("model_serving", 3_200, 700),
            ("chameleon", 1_300, 350),
            ("image_processing", 2_100, 1_600),
        ];
        let workloads = MIX
            .iter()
            .enumerate()
            .map(|(i, &(name, cold, exec))| Workload {
                id: i as WorkloadId,
                name: name.to_string(),
                cold_start_ms: cold,
                exec_ms: exec,
                memory_mb: 256,
                checkpoint_extra_ms: 600,
            })
            .collect();
        Self { workloads }
    }

    /// Catalog of `n` identical workloads, handy for cache-style experiments.
    pub fn uniform(n: usize, cold_start_ms: u64, exec_ms: u64) -> Result<Self, WorkloadError> {
        Self::new(
            (0..n)
                .map(|i| Workload {
                    id: i as WorkloadId,
                    name: format!("w{i}"),
                    cold_start_ms,
                    exec_ms,
                    memory_mb: 256,
                    checkpoint_extra_ms: 0,
                })
                .collect(),
        )
    }

    pub fn get(&self, id: WorkloadId) -> Option<&Workload> {
        self.workloads.get(id as usize)
    }

    pub fn len(&self) -> usize {
        self.workloads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.workloads.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Workload> {
        self.workloads.iter()
    }
}
