//! Artificial-workload benchmark: many fixed-grain tasks launched through
//! one async combinator, timed against a plain-spawn baseline measured in
//! the same session.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use resil_core::fault::{
    universal_task, DrawSite, FaultInjector, FaultKind, FaultModel, FaultModelError, WorkSpec, UNIVERSAL_ANSWER,
};
use resil_core::resiliency::{
    async_replay, async_replay_validate, async_replicate, async_replicate_validate, async_replicate_vote,
    async_replicate_vote_validate, current_attempt, majority_vote,
};
use resil_core::{ConfigError, QueuePolicy, Runtime, RuntimeConfig, TaskHandle, ThreadPool};

use crate::stats::{mean, stddev};

pub const DESK_TASK_COUNT: u64 = 100_000;
pub const FULL_TASK_COUNT: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Baseline,
    AsyncReplay,
    AsyncReplayValidate,
    AsyncReplicate,
    AsyncReplicateValidate,
    AsyncReplicateVote,
    AsyncReplicateVoteValidate,
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::Baseline,
        Variant::AsyncReplay,
        Variant::AsyncReplayValidate,
        Variant::AsyncReplicate,
        Variant::AsyncReplicateValidate,
        Variant::AsyncReplicateVote,
        Variant::AsyncReplicateVoteValidate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::AsyncReplay => "async_replay",
            Variant::AsyncReplayValidate => "async_replay_validate",
            Variant::AsyncReplicate => "async_replicate",
            Variant::AsyncReplicateValidate => "async_replicate_validate",
            Variant::AsyncReplicateVote => "async_replicate_vote",
            Variant::AsyncReplicateVoteValidate => "async_replicate_vote_validate",
        }
    }

    pub fn is_replicate(self) -> bool {
        matches!(
            self,
            Variant::AsyncReplicate
                | Variant::AsyncReplicateValidate
                | Variant::AsyncReplicateVote
                | Variant::AsyncReplicateVoteValidate
        )
    }

    pub fn is_validated(self) -> bool {
        matches!(
            self,
            Variant::AsyncReplayValidate | Variant::AsyncReplicateValidate | Variant::AsyncReplicateVoteValidate
        )
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| format!("unknown artificial variant `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArtificialConfig {
    pub task_count: u64,
    pub grain: Duration,
    pub error_p: f64,
    pub fault_kind: FaultKind,
    pub replay_n: usize,
    pub replicate_n: usize,
    pub cores: usize,
    pub variant: Variant,
    pub runs: usize,
    pub seed: u64,
    pub queue_policy: QueuePolicy,
}

impl Default for ArtificialConfig {
    fn default() -> Self {
        Self {
            task_count: DESK_TASK_COUNT,
            grain: Duration::from_micros(200),
            error_p: 0.0,
            fault_kind: FaultKind::Loud,
            replay_n: 3,
            replicate_n: 3,
            cores: RuntimeConfig::available().worker_count,
            variant: Variant::AsyncReplay,
            runs: 10,
            seed: 0,
            queue_policy: QueuePolicy::WorkStealing,
        }
    }
}

impl ArtificialConfig {
    pub fn validate(&self) -> Result<(), BenchError> {
        if self.task_count == 0 {
            return Err(BenchError::Config("task_count must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.error_p) {
            return Err(BenchError::Config(format!("error_p {} outside [0, 1)", self.error_p)));
        }
        if self.replay_n == 0 || self.replicate_n == 0 {
            return Err(BenchError::Config("replay_n and replicate_n must be positive".into()));
        }
        if self.runs == 0 {
            return Err(BenchError::Config("runs must be positive".into()));
        }
        RuntimeConfig::new(self.cores, self.queue_policy).validate()?;
        Ok(())
    }

    /// Resilience parameter relevant to the variant.
    pub fn n(&self) -> usize {
        if self.variant.is_replicate() {
            self.replicate_n
        } else {
            self.replay_n
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BenchError {
    #[error("invalid benchmark configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Runtime(#[from] ConfigError),
    #[error(transparent)]
    Fault(#[from] FaultModelError),
}

/// Counters of one timed pass over all tasks.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunStats {
    pub wall_time_s: f64,
    pub executions: u64,
    pub injected_failures: u64,
    /// Handles that ended in an error.
    pub failed_tasks: u64,
    /// Handles that resolved to something other than 42.
    pub wrong_results: u64,
}

/// Averaged measurements of one configuration. Counters are totals over
/// all runs.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub config: ArtificialConfig,
    pub wall_times_s: Vec<f64>,
    pub baseline_wall_times_s: Vec<f64>,
    pub tasks_launched: u64,
    pub executions: u64,
    pub injected_failures: u64,
    pub failed_tasks: u64,
    pub wrong_results: u64,
    pub runs_averaged: usize,
}

impl BenchReport {
    pub fn wall_time_mean_s(&self) -> f64 {
        mean(&self.wall_times_s)
    }

    pub fn wall_time_stddev_s(&self) -> f64 {
        stddev(&self.wall_times_s)
    }

    pub fn baseline_wall_time_s(&self) -> Option<f64> {
        (!self.baseline_wall_times_s.is_empty()).then(|| mean(&self.baseline_wall_times_s))
    }

    /// `(variant - baseline) / task_count`, in seconds.
    pub fn amortized_overhead_per_task_s(&self) -> Option<f64> {
        self.baseline_wall_time_s()
            .map(|b| (self.wall_time_mean_s() - b) / self.config.task_count as f64)
    }

    pub fn pct_extra_time(&self) -> Option<f64> {
        self.baseline_wall_time_s()
            .map(|b| 100.0 * (self.wall_time_mean_s() - b) / b)
    }

    pub fn executions_per_task(&self) -> f64 {
        self.executions as f64 / self.tasks_launched as f64
    }
}

/// Starts a pool of `cfg.cores` workers and measures `cfg`. Pool start-up and
/// shutdown are excluded from every timing.
pub fn run_artificial(cfg: &ArtificialConfig) -> Result<BenchReport, BenchError> {
    cfg.validate()?;
    let pool = ThreadPool::start(RuntimeConfig::new(cfg.cores, cfg.queue_policy))?;
    let report = run_artificial_on(pool.runtime(), cfg);
    pool.shutdown();
    report
}

/// Like [`run_artificial`] on an existing pool. Unless the variant is the
/// baseline itself, each run is paired with a fault-free baseline run.
pub fn run_artificial_on(rt: &Runtime, cfg: &ArtificialConfig) -> Result<BenchReport, BenchError> {
    cfg.validate()?;
    let mut report = BenchReport {
        config: cfg.clone(),
        wall_times_s: Vec::with_capacity(cfg.runs),
        baseline_wall_times_s: Vec::with_capacity(cfg.runs),
        tasks_launched: 0,
        executions: 0,
        injected_failures: 0,
        failed_tasks: 0,
        wrong_results: 0,
        runs_averaged: cfg.runs,
    };
    for run in 0..cfg.runs {
        if cfg.variant != Variant::Baseline {
            let mut base = cfg.clone();
            base.variant = Variant::Baseline;
            base.error_p = 0.0;
            let b = run_once(rt, &base, run as u64)?;
            report.baseline_wall_times_s.push(b.wall_time_s);
        }
        let s = run_once(rt, cfg, run as u64)?;
        report.wall_times_s.push(s.wall_time_s);
        report.tasks_launched += cfg.task_count;
        report.executions += s.executions;
        report.injected_failures += s.injected_failures;
        report.failed_tasks += s.failed_tasks;
        report.wrong_results += s.wrong_results;
    }
    if cfg.variant == Variant::Baseline {
        report.baseline_wall_times_s = report.wall_times_s.clone();
    }
    Ok(report)
}

/// One timed pass: launches `task_count` tasks in waves of at most
/// `16 * cores` outstanding handles.
pub fn run_once(rt: &Runtime, cfg: &ArtificialConfig, run: u64) -> Result<RunStats, BenchError> {
    let model = FaultModel::with_probability(cfg.error_p, cfg.fault_kind, cfg.seed.wrapping_add(run))?;
    let spec = Arc::new(WorkSpec {
        delay: cfg.grain,
        injector: FaultInjector::new(model),
    });
    let executions = Arc::new(AtomicU64::new(0));
    let window = 16 * rt.worker_count();
    let mut inflight: VecDeque<TaskHandle<i64>> = VecDeque::with_capacity(window);
    let mut stats = RunStats::default();
    let settle = |h: TaskHandle<i64>, stats: &mut RunStats| match h.get() {
        Ok(UNIVERSAL_ANSWER) => {}
        Ok(_) => stats.wrong_results += 1,
        Err(_) => stats.failed_tasks += 1,
    };

    let start = Instant::now();
    for task in 0..cfg.task_count {
        if inflight.len() == window {
            let h = inflight.pop_front().expect("window full");
            settle(h, &mut stats);
        }
        let spec = Arc::clone(&spec);
        let executions = Arc::clone(&executions);
        let f = move || {
            executions.fetch_add(1, Ordering::Relaxed);
            let attempt = current_attempt().unwrap_or(0) as u64;
            universal_task(&spec, DrawSite::Keyed { task, attempt })
        };
        let valf = |x: &i64| *x == UNIVERSAL_ANSWER;
        let (rn, cn) = (cfg.replay_n, cfg.replicate_n);
        let h = match cfg.variant {
            Variant::Baseline => rt.spawn(f),
            Variant::AsyncReplay => async_replay(rt, rn, f),
            Variant::AsyncReplayValidate => async_replay_validate(rt, rn, valf, f),
            Variant::AsyncReplicate => async_replicate(rt, cn, f),
            Variant::AsyncReplicateValidate => async_replicate_validate(rt, cn, valf, f),
            Variant::AsyncReplicateVote => async_replicate_vote(rt, cn, majority_vote, f),
            Variant::AsyncReplicateVoteValidate => async_replicate_vote_validate(rt, cn, majority_vote, valf, f),
        };
        inflight.push_back(h);
    }
    for h in inflight.drain(..) {
        settle(h, &mut stats);
    }
    stats.wall_time_s = start.elapsed().as_secs_f64();
    rt.wait_idle();
    stats.executions = executions.load(Ordering::SeqCst);
    stats.injected_failures = spec.injector.injected();
    Ok(stats)
}

/// Runs every configuration in order, preceded by a baseline row measured
/// on the first configuration's core count.
pub fn sweep(cfgs: &[ArtificialConfig]) -> Result<Vec<BenchReport>, BenchError> {
    let Some(first) = cfgs.first() else {
        return Ok(Vec::new());
    };
    if cfgs
        .iter()
        .any(|c| c.task_count != first.task_count || c.grain != first.grain)
    {
        return Err(BenchError::Config(
            "sweep configurations must share task_count and grain".into(),
        ));
    }
    let mut base = first.clone();
    base.variant = Variant::Baseline;
    base.error_p = 0.0;
    let mut out = vec![run_artificial(&base)?];
    for cfg in cfgs {
        out.push(run_artificial(cfg)?);
    }
    Ok(out)
}
