//! Command-line front end for the `warmpool` binary.
//!
//! Exit codes: 0 success, 2 usage error, 3 data error, 4 invariant breach.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use crate::config::{
    PolicyScope, RunConfigFile, Saturation, SimConfig, TIERED_KEEPALIVE_MS, VANILLA_KEEPALIVE_MS,
};
use crate::experiment::{self, ExperimentError, SetSpec, SystemSpec, TraceSource};
use crate::learn::{self, Dataset, LearnError, MlpModel, RetrainStrategy, TrainConfig};
use crate::policies::PolicyKind;
use crate::report::{self, DEFAULT_WINDOW_MS};
use crate::sim::{self, SimError};
use crate::trace::{self, Scenario, SynthParams, TenantParams};
use crate::workload::WorkloadCatalog;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_INVARIANT: i32 = 4;

pub const OUT_DIR_ENV: &str = "WARMPOOL_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "warmpool", version, about = "Serverless warm-pool simulator with a shared reclaim pool")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert, generate or analyse per-minute trace files.
    #[command(subcommand)]
    Traces(TracesCmd),
    /// Run one policy and pool configuration over one trace set.
    Simulate(SimulateArgs),
    /// Generate oracle-labelled data and train the eviction model.
    Train(TrainArgs),
    /// Run several systems over repeated seeded trace sets.
    Compare(CompareArgs),
}

#[derive(Debug, Subcommand)]
pub enum TracesCmd {
    /// Expand per-minute counts into an event file (one tenant per row).
    Expand {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// First minute of the window to expand.
        #[arg(long, default_value_t = 0)]
        start_min: usize,
        /// Window length in minutes.
        #[arg(long, default_value_t = 1440)]
        minutes: usize,
        /// Drop rows whose daily total is outside [10, 10000].
        #[arg(long)]
        filter_outliers: bool,
        #[command(flatten)]
        catalog: CatalogArgs,
    },
    /// Write a seeded synthetic trace file in the per-minute CSV format.
    Synth {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 40)]
        traces: usize,
        #[arg(long, default_value_t = 0.0)]
        mobile_fraction: f64,
        #[arg(long, default_value_t = 1)]
        day: u32,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Spike-interval CDF pooled over all rows.
    Spikes {
        #[arg(long = "in")]
        input: PathBuf,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args, Clone)]
pub struct CatalogArgs {
    /// Workload catalog: `standard` or `uniform:N:COLD_MS:EXEC_MS`.
    #[arg(long, default_value = "standard")]
    pub catalog: String,
}

impl CatalogArgs {
    pub fn build(&self) -> Result<WorkloadCatalog> {
        if self.catalog == "standard" {
            return Ok(WorkloadCatalog::standard());
        }
        let parts: Vec<&str> = self.catalog.split(':').collect();
        match parts.as_slice() {
            ["uniform", n, cold, exec] => Ok(WorkloadCatalog::uniform(
                n.parse().context("catalog size")?,
                cold.parse().context("catalog cold start")?,
                exec.parse().context("catalog exec time")?,
            )?),
            _ => Err(UsageError(format!("unknown catalog {:?}", self.catalog)).into()),
        }
    }
}

/// How trace sets are built.
#[derive(Debug, Args, Clone)]
pub struct SetArgs {
    /// s1 (regular only), s2 (mobile only) or s3 (mixed).
    #[arg(long, default_value = "s1")]
    pub scenario: String,
    #[arg(long, default_value_t = 8)]
    pub tenants: usize,
    /// Mobile:regular tenant ratio for s3.
    #[arg(long, default_value = "1:1")]
    pub mobile_ratio: String,
    #[arg(long, default_value_t = 40)]
    pub traces_per_set: usize,
    #[arg(long, default_value_t = 10)]
    pub window_min: u32,
    #[arg(long, default_value_t = 15)]
    pub window_max: u32,
    /// Per-minute trace file to sample from; synthetic traces otherwise.
    #[arg(long)]
    pub azure: Option<PathBuf>,
    /// Day index for synthetic traces.
    #[arg(long, default_value_t = 1)]
    pub day: u32,
    #[command(flatten)]
    pub catalog: CatalogArgs,
}

impl SetArgs {
    pub fn spec(&self) -> Result<SetSpec> {
        let scenario: Scenario = self.scenario.parse().map_err(UsageError)?;
        let (m, r) = self
            .mobile_ratio
            .split_once(':')
            .and_then(|(m, r)| Some((m.parse().ok()?, r.parse().ok()?)))
            .ok_or_else(|| UsageError(format!("bad --mobile-ratio {:?} (expected M:R)", self.mobile_ratio)))?;
        Ok(SetSpec {
            scenario,
            tenants: TenantParams { tenants: self.tenants, mobile_ratio: (m, r) },
            traces_per_set: self.traces_per_set,
            window_minutes: (self.window_min, self.window_max),
        })
    }

    pub fn source(&self) -> Result<TraceSource> {
        Ok(match &self.azure {
            Some(path) => TraceSource::Rows(
                trace::load_azure_csv(path).with_context(|| format!("reading {}", path.display()))?,
            ),
            None => TraceSource::Synthetic(SynthParams { day: self.day, ..SynthParams::default() }),
        })
    }
}

/// Pool and engine settings shared by `simulate` and `train`.
#[derive(Debug, Args, Clone)]
pub struct EngineArgs {
    /// Key/value run-config file; flags override its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Pool shorthand W-R: W + R containers, R of them reclaim slots.
    #[arg(long)]
    pub pool: Option<String>,
    /// Warm-pool keep-alive in ms (default 600000 without reclaim, else 300000).
    #[arg(long)]
    pub keepalive: Option<u64>,
    /// Reclaim-pool keep-alive in ms (default 300000).
    #[arg(long)]
    pub reclaim_keepalive: Option<u64>,
    #[arg(long)]
    pub restore_cost: Option<f64>,
    /// Latency added to each eviction, in ms (e.g. 38.63).
    #[arg(long)]
    pub decision_cost: Option<f64>,
    /// drop or buffer.
    #[arg(long)]
    pub on_saturation: Option<String>,
    /// Oracle look-ahead in requests.
    #[arg(long)]
    pub window: Option<usize>,
    /// all or reclaim: which decisions the learned policy makes.
    #[arg(long)]
    pub learned_scope: Option<String>,
    /// Re-check pool invariants after every event.
    #[arg(long)]
    pub check_invariants: bool,
}

impl EngineArgs {
    fn file(&self) -> Result<RunConfigFile> {
        match &self.config {
            Some(p) => Ok(RunConfigFile::load(p)?),
            None => Ok(RunConfigFile::default()),
        }
    }

    /// Defaults, then the config file, then flags.
    pub fn sim_config(&self, policy: PolicyKind) -> Result<SimConfig> {
        let file = self.file()?;
        let mut cfg = SimConfig::default();
        if policy == PolicyKind::Learned {
            cfg.scope = PolicyScope::Reclaim;
        }
        file.apply(&mut cfg);
        if let Some(p) = &self.pool {
            cfg.pool.apply_shorthand(p).map_err(|e| UsageError(e.to_string()))?;
        }
        if file.warm_keepalive_ms.is_none() && self.keepalive.is_none() {
            cfg.pool.warm_keepalive_ms =
                if cfg.pool.reclaim_enabled { TIERED_KEEPALIVE_MS } else { VANILLA_KEEPALIVE_MS };
        }
        if file.reclaim_keepalive_ms.is_none() && self.reclaim_keepalive.is_none() {
            cfg.pool.reclaim_keepalive_ms = TIERED_KEEPALIVE_MS;
        }
        if let Some(v) = self.keepalive {
            cfg.pool.warm_keepalive_ms = v;
        }
        if let Some(v) = self.reclaim_keepalive {
            cfg.pool.reclaim_keepalive_ms = v;
        }
        if let Some(v) = self.restore_cost {
            cfg.pool.restore_cost_ms = v;
        }
        if let Some(v) = self.decision_cost {
            cfg.pool.eviction_decision_cost_ms = v;
        }
        if let Some(s) = &self.on_saturation {
            cfg.saturation = s.parse::<Saturation>().map_err(|e| UsageError(e.to_string()))?;
        }
        if let Some(w) = self.window {
            cfg.oracle_window = w;
        }
        if let Some(s) = &self.learned_scope {
            cfg.scope = s.parse::<PolicyScope>().map_err(|e| UsageError(e.to_string()))?;
        }
        cfg.check_invariants |= self.check_invariants;
        cfg.pool.validate().map_err(|e| UsageError(e.to_string()))?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// lru, lfu, gdsf, belady or learned.
    #[arg(long)]
    pub policy: Option<String>,
    /// Model file for the learned policy.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Event file to replay instead of a generated trace set.
    #[arg(long)]
    pub events: Option<PathBuf>,
    /// Which set of the seeded family to generate.
    #[arg(long, default_value_t = 0)]
    pub set_index: u64,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (or $WARMPOOL_OUT_DIR).
    #[arg(long, env = OUT_DIR_ENV, default_value = "out")]
    pub out: PathBuf,
    /// Also write the per-request outcome log.
    #[arg(long)]
    pub outcomes: bool,
    #[command(flatten)]
    pub engine: EngineArgs,
    #[command(flatten)]
    pub set: SetArgs,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Number of generated trace sets.
    #[arg(long, default_value_t = 100)]
    pub sets: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 256)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// Hidden layer widths, comma-separated.
    #[arg(long, default_value = "256,256,256,256,256")]
    pub hidden: String,
    /// Retrain instead of training from scratch.
    #[arg(long)]
    pub retrain: bool,
    /// Base model for retraining.
    #[arg(long)]
    pub base: Option<PathBuf>,
    /// Share of old samples mixed in; 0 trains on new data only.
    #[arg(long, default_value_t = 0.0)]
    pub mix_old: f64,
    /// Old samples (CSV) to mix in.
    #[arg(long)]
    pub old_samples: Option<PathBuf>,
    /// Write the generated samples as CSV.
    #[arg(long)]
    pub dump_samples: Option<PathBuf>,
    /// Output directory (or $WARMPOOL_OUT_DIR).
    #[arg(long, env = OUT_DIR_ENV, default_value = "out")]
    pub out: PathBuf,
    #[command(flatten)]
    pub engine: EngineArgs,
    #[command(flatten)]
    pub set: SetArgs,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// System label `<vanilla|tiered>-W-R[:policy]`; repeat for each system.
    #[arg(long = "system", required = true)]
    pub systems: Vec<String>,
    #[arg(long, default_value_t = 15)]
    pub repetitions: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Model file for learned systems.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// drop or buffer.
    #[arg(long, default_value = "buffer")]
    pub on_saturation: String,
    #[arg(long)]
    pub decision_cost: Option<f64>,
    #[arg(long, default_value = "reclaim")]
    pub learned_scope: String,
    #[arg(long, default_value_t = crate::config::DEFAULT_ORACLE_WINDOW)]
    pub window: usize,
    /// Output directory (or $WARMPOOL_OUT_DIR).
    #[arg(long, env = OUT_DIR_ENV, default_value = "out")]
    pub out: PathBuf,
    #[command(flatten)]
    pub set: SetArgs,
}

/// Bad flags or flag combinations; mapped to exit code 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return EXIT_USAGE;
        }
        if let Some(e) = cause.downcast_ref::<SimError>() {
            if e.is_invariant_breach() {
                return EXIT_INVARIANT;
            }
        }
        if let Some(e) = cause.downcast_ref::<ExperimentError>() {
            if e.is_invariant_breach() {
                return EXIT_INVARIANT;
            }
        }
        if let Some(LearnError::Sim(e)) = cause.downcast_ref::<LearnError>() {
            if e.is_invariant_breach() {
                return EXIT_INVARIANT;
            }
        }
    }
    EXIT_DATA
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Traces(cmd) => cmd_traces(cmd),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Train(args) => cmd_train(args),
        Command::Compare(args) => cmd_compare(args),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(io::stdout().lock()),
    })
}

fn cmd_traces(cmd: TracesCmd) -> Result<()> {
    match cmd {
        TracesCmd::Expand { input, out, start_min, minutes, filter_outliers, catalog } => {
            let catalog = catalog.build()?;
            let mut rows = trace::load_azure_csv(&input).with_context(|| format!("reading {}", input.display()))?;
            if filter_outliers {
                rows = trace::filter_outliers(&rows);
            }
            let end = start_min.saturating_add(minutes).min(trace::MINUTES_PER_DAY);
            if start_min >= end {
                bail!(UsageError(format!("empty window {start_min}..{end}")));
            }
            let streams = rows
                .iter()
                .enumerate()
                .map(|(i, row)| {
                    let w = (i % catalog.len()) as u32;
                    trace::expand_trace_window(row, start_min..end, i as u32, i as u32, w)
                })
                .collect();
            let events = trace::merge_streams(streams);
            let mut w = create(&out)?;
            trace::write_events(&events, &mut w)?;
            w.flush()?;
            eprintln!("wrote {} events to {}", events.len(), out.display());
        }
        TracesCmd::Synth { seed, traces, mobile_fraction, day, out } => {
            if !(0.0..=1.0).contains(&mobile_fraction) {
                bail!(UsageError(format!("--mobile-fraction {mobile_fraction} outside [0, 1]")));
            }
            let params = SynthParams { traces, mobile_fraction, day, ..SynthParams::default() };
            let rows = trace::synthesize(&params, seed);
            let mut w = output(out.as_deref())?;
            trace::write_azure_csv(&rows, &mut w)?;
            w.flush()?;
        }
        TracesCmd::Spikes { input, out } => {
            let rows = trace::load_azure_csv(&input).with_context(|| format!("reading {}", input.display()))?;
            let intervals = trace::pooled_spike_intervals(&rows);
            let mut w = output(out.as_deref())?;
            trace::write_spike_cdf(&trace::interval_cdf(&intervals), &mut w)?;
            w.flush()?;
            eprintln!(
                "{} intervals; {:.3} longer than 5 min, {:.3} longer than 15 min",
                intervals.len(),
                trace::fraction_longer_than(&intervals, 5),
                trace::fraction_longer_than(&intervals, 15)
            );
        }
    }
    Ok(())
}

fn load_model(path: Option<&Path>, needed: bool) -> Result<Option<Arc<MlpModel>>> {
    match path {
        Some(p) => Ok(Some(Arc::new(
            MlpModel::load(p).with_context(|| format!("loading model {}", p.display()))?,
        ))),
        None if needed => bail!(UsageError("the learned policy needs --model".into())),
        None => Ok(None),
    }
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let file = args.engine.file()?;
    let policy: PolicyKind = match args.policy.as_deref() {
        Some(p) => p.parse().map_err(UsageError)?,
        None => file.policy_kind()?.unwrap_or(PolicyKind::Lru),
    };
    let cfg = args.engine.sim_config(policy)?;
    let seed = args.seed.or(file.seed).unwrap_or(0);
    let catalog = args.set.catalog.build()?;
    let model_path = args.model.clone().or(file.model.clone());
    let model = load_model(model_path.as_deref(), policy == PolicyKind::Learned)?;

    let events = match &args.events {
        Some(path) => {
            let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
            trace::read_events(f).with_context(|| format!("reading {}", path.display()))?
        }
        None => {
            experiment::build_set(&args.set.source()?, &args.set.spec()?, &catalog, seed, args.set_index)?.events
        }
    };
    let p = experiment::make_policy(policy, model.as_ref(), policy.name())?;
    let log = sim::run(&events, &cfg, &catalog, p, seed)?;
    let report = report::summarize(&log, DEFAULT_WINDOW_MS);

    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let mut w = create(&args.out.join("report.csv"))?;
    report.write_csv(&mut w)?;
    w.flush()?;
    let mut w = create(&args.out.join("cold_windows.csv"))?;
    report.write_cold_windows_csv(&mut w)?;
    w.flush()?;
    if args.outcomes {
        let mut w = create(&args.out.join("outcomes.csv"))?;
        report::write_outcomes_csv(&log, &mut w)?;
        w.flush()?;
    }
    print!("policy             {policy}\npool               {}\n{}", cfg.pool.shorthand(), report.to_text());
    Ok(())
}

fn parse_hidden(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| p.trim().parse::<usize>().map_err(|_| UsageError(format!("bad --hidden {s:?}")).into()))
        .collect()
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let cfg = args.engine.sim_config(PolicyKind::Belady)?;
    let catalog = args.set.catalog.build()?;
    let train_cfg = TrainConfig {
        epochs: args.epochs,
        batch_size: args.batch_size,
        learning_rate: args.lr,
        seed: args.seed,
        mix_old_fraction: args.mix_old,
        hidden: parse_hidden(&args.hidden)?,
    };
    train_cfg.validate().map_err(|e| UsageError(e.to_string()))?;
    if args.sets == 0 {
        bail!(UsageError("--sets must be at least 1".into()));
    }
    if !args.retrain && (args.base.is_some() || args.old_samples.is_some()) {
        bail!(UsageError("--base and --old-samples need --retrain".into()));
    }
    if args.retrain && args.mix_old > 0.0 && args.old_samples.is_none() {
        bail!(UsageError("--mix-old above 0 needs --old-samples".into()));
    }

    let sets = experiment::build_sets(&args.set.source()?, &args.set.spec()?, &catalog, args.seed, 0, args.sets)?;
    let streams: Vec<_> = sets.into_iter().map(|s| s.events).collect();
    let data = learn::generate_training_data(&streams, &cfg, &catalog, args.seed)?;
    eprintln!("{} samples in {} decisions from {} sets", data.len(), data.num_groups(), args.sets);
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    if let Some(path) = &args.dump_samples {
        data.write_csv(path).with_context(|| format!("writing {}", path.display()))?;
    }
    if data.is_empty() {
        bail!("no eviction decisions were generated; use more traces or a smaller pool");
    }

    let outcome = if args.retrain {
        let base = match &args.base {
            Some(p) => Some(MlpModel::load(p).with_context(|| format!("loading model {}", p.display()))?),
            None => None,
        };
        let old = match &args.old_samples {
            Some(p) => Dataset::read_csv(p).with_context(|| format!("reading {}", p.display()))?,
            None => Dataset::new(data.dim()),
        };
        let strategy = if args.mix_old > 0.0 { RetrainStrategy::Mixed } else { RetrainStrategy::FromScratch };
        learn::retrain(base.as_ref(), &old, &data, strategy, &train_cfg)?
    } else {
        learn::train(&data, &train_cfg)?
    };
    outcome.model.save(&args.out.join("model.bin"))?;
    outcome.write_loss_csv(&args.out.join("loss.csv"))?;
    println!(
        "trained {:?} on {} samples: loss {:.5} -> {:.5}",
        outcome.model.dims(),
        data.len(),
        outcome.loss_curve[0].loss,
        outcome.final_loss
    );
    Ok(())
}

fn cmd_compare(args: CompareArgs) -> Result<()> {
    if args.repetitions == 0 {
        bail!(UsageError("--repetitions must be at least 1".into()));
    }
    let systems: Vec<SystemSpec> = args
        .systems
        .iter()
        .map(|s| s.parse::<SystemSpec>().map_err(|e| UsageError(e.to_string())))
        .collect::<Result<_, _>>()?;
    let needs_model = systems.iter().any(|s| s.policy == PolicyKind::Learned);
    let model = load_model(args.model.as_deref(), needs_model)?;
    let mut base = SimConfig {
        saturation: args.on_saturation.parse().map_err(|e: crate::config::ConfigError| UsageError(e.to_string()))?,
        scope: args.learned_scope.parse().map_err(|e: crate::config::ConfigError| UsageError(e.to_string()))?,
        oracle_window: args.window,
        ..SimConfig::default()
    };
    if let Some(c) = args.decision_cost {
        base.pool.eviction_decision_cost_ms = c;
    }
    let catalog = args.set.catalog.build()?;
    let spec = args.set.spec()?;
    let sets = experiment::build_sets(&args.set.source()?, &spec, &catalog, args.seed, 0, args.repetitions)?;
    let systems: Vec<SystemSpec> = systems
        .into_iter()
        .map(|mut s| {
            s.pool.eviction_decision_cost_ms = base.pool.eviction_decision_cost_ms;
            s
        })
        .collect();
    let (table, records) =
        experiment::compare_on_sets(&sets, &systems, &base, &catalog, model.as_ref(), spec.scenario.label())?;

    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let mut w = create(&args.out.join("comparison.csv"))?;
    table.write_csv(&mut w)?;
    w.flush()?;
    let mut w = create(&args.out.join("runs.csv"))?;
    let mut csv = csv::Writer::from_writer(&mut w);
    csv.write_record(["system", "scenario", "seed", "warm_rate_pct", "mean_response_ms", "mean_queue_size"])?;
    for r in &records {
        csv.write_record([
            r.system.clone(),
            r.scenario.clone(),
            r.seed.to_string(),
            format!("{:.4}", r.report.warm_rate_pct),
            format!("{:.4}", r.report.mean_response_ms),
            format!("{:.6}", r.report.mean_queue_size),
        ])?;
    }
    csv.flush()?;
    drop(csv);
    w.flush()?;
    print!("{}", table.to_text());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::PoolConfig;

    fn parse(args: &[&str]) -> Result<Cli, clap::Error> {
        Cli::try_parse_from(std::iter::once("warmpool").chain(args.iter().copied()))
    }

    #[test]
    fn vanilla_pool_flags() {
        let cli = parse(&["simulate", "--policy", "lru", "--pool", "32-0", "--keepalive", "600000"]).unwrap();
        let Command::Simulate(a) = cli.command else { panic!() };
        let cfg = a.engine.sim_config(PolicyKind::Lru).unwrap();
        let expected = PoolConfig::vanilla(32);
        assert_eq!(cfg.pool.max_containers, expected.max_containers);
        assert_eq!(cfg.pool.warm_keepalive_ms, expected.warm_keepalive_ms);
        assert!(!cfg.pool.reclaim_enabled);
    }

    #[test]
    fn tiered_pool_flags() {
        let cli = parse(&["simulate", "--policy", "learned", "--model", "m.bin", "--pool", "24-8"]).unwrap();
        let Command::Simulate(a) = cli.command else { panic!() };
        let cfg = a.engine.sim_config(PolicyKind::Learned).unwrap();
        assert_eq!(cfg.pool, PoolConfig::tiered(24, 8));
        assert_eq!(cfg.scope, PolicyScope::Reclaim);
    }

    #[test]
    fn bad_pool_is_usage_error() {
        let cli = parse(&["simulate", "--pool", "x-1"]).unwrap();
        let Command::Simulate(a) = cli.command else { panic!() };
        let err = a.engine.sim_config(PolicyKind::Lru).unwrap_err();
        assert_eq!(exit_code(&err), EXIT_USAGE);
    }

    #[test]
    fn retrain_flags_parse() {
        let cli = parse(&["train", "--retrain", "--base", "m.bin", "--mix-old", "0.0"]).unwrap();
        let Command::Train(a) = cli.command else { panic!() };
        assert!(a.retrain);
        assert_eq!(a.mix_old, 0.0);
        assert_eq!(a.base.as_deref(), Some(Path::new("m.bin")));
    }

    #[test]
    fn compare_requires_a_system() {
        assert!(parse(&["compare"]).is_err());
        let cli = parse(&["compare", "--system", "vanilla-32-0", "--system", "tiered-24-8:gdsf"]).unwrap();
        let Command::Compare(a) = cli.command else { panic!() };
        assert_eq!(a.systems.len(), 2);
    }

    #[test]
    fn invariant_breach_maps_to_exit_4() {
        let err = anyhow::Error::new(SimError::Invariant { t_us: 0, detail: "x".into() });
        assert_eq!(exit_code(&err), EXIT_INVARIANT);
        let err = anyhow::Error::new(io::Error::other("disk"));
        assert_eq!(exit_code(&err), EXIT_DATA);
    }
}
