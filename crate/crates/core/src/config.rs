//! Engine configuration and the key/value run-config file.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::policies::PolicyKind;

/// Default restore latency when a container is demoted to the reclaim pool.
pub const DEFAULT_RESTORE_COST_MS: f64 = 430.0;
/// Measured per-eviction inference latency; off unless configured.
pub const MEASURED_EVICTION_DECISION_MS: f64 = 38.63;
pub const VANILLA_KEEPALIVE_MS: u64 = 10 * 60_000;
pub const TIERED_KEEPALIVE_MS: u64 = 5 * 60_000;
pub const DEFAULT_ORACLE_WINDOW: usize = 30;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("max_containers must be at least 1")]
    NoContainers,
    #[error("reclaim_capacity {reclaim} exceeds max_containers {max}")]
    ReclaimTooLarge { reclaim: usize, max: usize },
    #[error("{field} must be a finite non-negative number")]
    BadDuration { field: &'static str },
    #[error("invalid pool shorthand {0:?} (expected W-R, e.g. 24-8)")]
    BadPool(String),
    #[error("invalid value for {key}: {detail}")]
    BadValue { key: String, detail: String },
    #[error("config file {path}: {detail}")]
    File { path: PathBuf, detail: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolConfig {
    /// Cap on all live containers, busy and idle, across every pool.
    pub max_containers: usize,
    /// Cap on idle containers in the reclaim pool.
    pub reclaim_capacity: usize,
    pub warm_keepalive_ms: u64,
    pub reclaim_keepalive_ms: u64,
    pub reclaim_enabled: bool,
    pub restore_cost_ms: f64,
    pub eviction_decision_cost_ms: f64,
}

impl Default for PoolConfig {
    fn default() -> Self {
        Self::vanilla(32)
    }
}

impl PoolConfig {
    /// Single-tier baseline: no reclaim pool, 10-minute keep-alive.
    pub fn vanilla(max_containers: usize) -> Self {
        Self {
            max_containers,
            reclaim_capacity: 0,
            warm_keepalive_ms: VANILLA_KEEPALIVE_MS,
            reclaim_keepalive_ms: VANILLA_KEEPALIVE_MS,
            reclaim_enabled: false,
            restore_cost_ms: DEFAULT_RESTORE_COST_MS,
            eviction_decision_cost_ms: 0.0,
        }
    }

    /// Two-tier pool with `warm` warm slots and `reclaim` reclaim slots and
    /// 5-minute keep-alive in both tiers.
    pub fn tiered(warm: usize, reclaim: usize) -> Self {
        Self {
            max_containers: warm + reclaim,
            reclaim_capacity: reclaim,
            warm_keepalive_ms: TIERED_KEEPALIVE_MS,
            reclaim_keepalive_ms: TIERED_KEEPALIVE_MS,
            reclaim_enabled: reclaim > 0,
            restore_cost_ms: DEFAULT_RESTORE_COST_MS,
            eviction_decision_cost_ms: 0.0,
        }
    }

    /// Parses `W-R` into `max_containers = W + R`, `reclaim_capacity = R`,
    /// enabling the reclaim pool when `R > 0`. Keep-alives are left as set.
    pub fn apply_shorthand(&mut self, shorthand: &str) -> Result<(), ConfigError> {
        let (warm, reclaim) = parse_pool_shorthand(shorthand)?;
        self.max_containers = warm + reclaim;
        self.reclaim_capacity = reclaim;
        self.reclaim_enabled = reclaim > 0;
        Ok(())
    }

    /// Idle budget of the warm pool. With a reclaim pool the two idle budgets
    /// are disjoint.
    pub fn warm_idle_limit(&self) -> usize {
        if self.reclaim_enabled {
            self.max_containers - self.reclaim_capacity
        } else {
            self.max_containers
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.max_containers == 0 {
            return Err(ConfigError::NoContainers);
        }
        if self.reclaim_capacity > self.max_containers {
            return Err(ConfigError::ReclaimTooLarge {
                reclaim: self.reclaim_capacity,
                max: self.max_containers,
            });
        }
        for (field, v) in [
            ("restore_cost_ms", self.restore_cost_ms),
            ("eviction_decision_cost_ms", self.eviction_decision_cost_ms),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(ConfigError::BadDuration { field });
            }
        }
        Ok(())
    }

    /// `W-R` label matching [`PoolConfig::apply_shorthand`].
    pub fn shorthand(&self) -> String {
        let reclaim = if self.reclaim_enabled { self.reclaim_capacity } else { 0 };
        format!("{}-{}", self.max_containers - reclaim, reclaim)
    }
}

pub fn parse_pool_shorthand(s: &str) -> Result<(usize, usize), ConfigError> {
    let bad = || ConfigError::BadPool(s.to_string());
    let (w, r) = s.split_once('-').ok_or_else(bad)?;
    let warm: usize = w.trim().parse().map_err(|_| bad())?;
    let reclaim: usize = r.trim().parse().map_err(|_| bad())?;
    if warm + reclaim == 0 {
        return Err(bad());
    }
    Ok((warm, reclaim))
}

/// What happens to a request that finds every container slot busy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Saturation {
    /// Count it as a cold start and discard it.
    Drop,
    /// Queue it FIFO until a container frees up.
    Buffer,
}

impl FromStr for Saturation {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "drop" => Ok(Saturation::Drop),
            "buffer" => Ok(Saturation::Buffer),
            other => Err(ConfigError::BadValue {
                key: "on_saturation".into(),
                detail: format!("{other:?} (expected drop or buffer)"),
            }),
        }
    }
}

impl fmt::Display for Saturation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Saturation::Drop => "drop",
            Saturation::Buffer => "buffer",
        })
    }
}

/// Which eviction decisions the configured policy makes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyScope {
    /// Every pool.
    All,
    /// Reclaim-pool victims only; warm-pool victims fall back to LRU.
    Reclaim,
}

impl FromStr for PolicyScope {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "all" => Ok(PolicyScope::All),
            "reclaim" => Ok(PolicyScope::Reclaim),
            other => Err(ConfigError::BadValue {
                key: "learned_scope".into(),
                detail: format!("{other:?} (expected all or reclaim)"),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub pool: PoolConfig,
    pub saturation: Saturation,
    pub scope: PolicyScope,
    /// Look-ahead length handed to the oracle policy.
    pub oracle_window: usize,
    /// Re-check pool invariants after every event. Always on in debug builds.
    pub check_invariants: bool,
    /// Keep a feature snapshot of every policy-driven eviction decision.
    pub record_decisions: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            pool: PoolConfig::default(),
            saturation: Saturation::Buffer,
            scope: PolicyScope::All,
            oracle_window: DEFAULT_ORACLE_WINDOW,
            check_invariants: false,
            record_decisions: false,
        }
    }
}

impl SimConfig {
    pub fn with_pool(pool: PoolConfig) -> Self {
        Self { pool, ..Self::default() }
    }
}

/// Contents of a run-config file. Every key is optional; present keys
/// override defaults and are in turn overridden by explicit CLI flags.
///
/// ```toml
/// max_containers = 32
/// reclaim_capacity = 8
/// reclaim_enabled = true
/// warm_keepalive_ms = 300000
/// on_saturation = "buffer"
/// policy = "learned"
/// model = "model.bin"
/// seed = 7
/// ```
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    pub max_containers: Option<usize>,
    pub reclaim_capacity: Option<usize>,
    pub warm_keepalive_ms: Option<u64>,
    pub reclaim_keepalive_ms: Option<u64>,
    pub reclaim_enabled: Option<bool>,
    pub restore_cost_ms: Option<f64>,
    pub eviction_decision_cost_ms: Option<f64>,
    pub on_saturation: Option<Saturation>,
    pub policy: Option<String>,
    pub model: Option<PathBuf>,
    pub learned_scope: Option<PolicyScope>,
    pub window: Option<usize>,
    pub seed: Option<u64>,
}

impl RunConfigFile {
    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let file_err = |detail: String| ConfigError::File { path: path.to_path_buf(), detail };
        let text = std::fs::read_to_string(path).map_err(|e| file_err(e.to_string()))?;
        Self::parse(&text).map_err(file_err)
    }

    pub fn policy_kind(&self) -> Result<Option<PolicyKind>, ConfigError> {
        self.policy
            .as_deref()
            .map(|p| {
                p.parse::<PolicyKind>().map_err(|detail| ConfigError::BadValue {
                    key: "policy".into(),
                    detail,
                })
            })
            .transpose()
    }

    /// Writes every present key into `cfg`.
    pub fn apply(&self, cfg: &mut SimConfig) {
        let p = &mut cfg.pool;
        if let Some(v) = self.max_containers {
            p.max_containers = v;
        }
        if let Some(v) = self.reclaim_capacity {
            p.reclaim_capacity = v;
        }
        if let Some(v) = self.warm_keepalive_ms {
            p.warm_keepalive_ms = v;
        }
        if let Some(v) = self.reclaim_keepalive_ms {
            p.reclaim_keepalive_ms = v;
        }
        if let Some(v) = self.reclaim_enabled {
            p.reclaim_enabled = v;
        }
        if let Some(v) = self.restore_cost_ms {
            p.restore_cost_ms = v;
        }
        if let Some(v) = self.eviction_decision_cost_ms {
            p.eviction_decision_cost_ms = v;
        }
        if let Some(v) = self.on_saturation {
            cfg.saturation = v;
        }
        if let Some(v) = self.learned_scope {
            cfg.scope = v;
        }
        if let Some(v) = self.window {
            cfg.oracle_window = v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shorthand_totals() {
        let mut p = PoolConfig::vanilla(1);
        p.apply_shorthand("24-8").unwrap();
        assert_eq!((p.max_containers, p.reclaim_capacity, p.reclaim_enabled), (32, 8, true));
        assert_eq!(p.warm_idle_limit(), 24);
        assert_eq!(p.shorthand(), "24-8");
        p.apply_shorthand("32-0").unwrap();
        assert_eq!((p.max_containers, p.reclaim_enabled), (32, false));
        assert_eq!(p.warm_idle_limit(), 32);
        assert!(p.apply_shorthand("24").is_err());
        assert!(p.apply_shorthand("a-b").is_err());
    }

    #[test]
    fn validation() {
        let mut p = PoolConfig::tiered(2, 1);
        assert!(p.validate().is_ok());
        p.reclaim_capacity = 9;
        assert!(matches!(p.validate(), Err(ConfigError::ReclaimTooLarge { .. })));
        let mut p = PoolConfig::vanilla(0);
        assert_eq!(p.validate(), Err(ConfigError::NoContainers));
        p.max_containers = 1;
        p.restore_cost_ms = -1.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn config_file_overrides() {
        let f = RunConfigFile::parse(
            "max_containers = 12\nreclaim_capacity = 4\nreclaim_enabled = true\non_saturation = \"drop\"\npolicy = \"gdsf\"\n",
        )
        .unwrap();
        let mut cfg = SimConfig::default();
        f.apply(&mut cfg);
        assert_eq!(cfg.pool.max_containers, 12);
        assert_eq!(cfg.saturation, Saturation::Drop);
        assert_eq!(f.policy_kind().unwrap(), Some(PolicyKind::Gdsf));
        assert!(RunConfigFile::parse("bogus = 1").is_err());
    }
}
