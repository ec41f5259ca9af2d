//! 1D periodic linear advection over decomposed subdomains.
//!
//! Each iteration launches one task per subdomain that depends on the
//! previous iteration's left, own and right subdomain results and advances
//! `steps` time steps at once through a ghost region of width `steps`.

mod kernel;

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

use resil_core::fault::{DrawSite, FaultInjector, FaultKind, FaultModel, FaultModelError};
use resil_core::resiliency::{current_attempt, dataflow_replay, dataflow_replay_validate, dataflow_replicate};
use resil_core::{ConfigError, ErrorPayload, QueuePolicy, Runtime, RuntimeConfig, TaskHandle, ThreadPool};

pub use kernel::{
    fluxes, interface_flux, lw_step, subdomain_task, validate_checksum, ChecksumWitness, StencilOutput, Subdomain,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StencilVariant {
    PureDataflow,
    Replay,
    ReplayChecksum,
    Replicate,
}

impl StencilVariant {
    pub const ALL: [StencilVariant; 4] = [
        StencilVariant::PureDataflow,
        StencilVariant::Replay,
        StencilVariant::ReplayChecksum,
        StencilVariant::Replicate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StencilVariant::PureDataflow => "pure_dataflow",
            StencilVariant::Replay => "replay",
            StencilVariant::ReplayChecksum => "replay_checksum",
            StencilVariant::Replicate => "replicate",
        }
    }
}

impl fmt::Display for StencilVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StencilVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| format!("unknown stencil variant `{s}`"))
    }
}

/// Decomposition and physics parameters, without the resilience settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StencilShape {
    pub subdomains: usize,
    pub points: usize,
    pub iterations: usize,
    pub steps: usize,
    pub courant: f64,
}

impl StencilShape {
    pub fn case_a() -> Self {
        Self {
            subdomains: 128,
            points: 16_000,
            iterations: 8_192,
            steps: 128,
            courant: 0.9,
        }
    }

    pub fn case_b() -> Self {
        Self {
            subdomains: 256,
            points: 8_000,
            iterations: 8_192,
            steps: 128,
            courant: 0.9,
        }
    }

    pub fn desk() -> Self {
        Self {
            subdomains: 16,
            points: 512,
            iterations: 64,
            steps: 8,
            courant: 0.9,
        }
    }

    pub fn total_cells(&self) -> usize {
        self.subdomains * self.points
    }

    pub fn total_tasks(&self) -> u64 {
        (self.subdomains * self.iterations) as u64
    }

    pub fn total_steps(&self) -> usize {
        self.iterations * self.steps
    }

    pub fn validate(&self) -> Result<(), StencilError> {
        let bad = |what: &str| Err(StencilError::Config(what.to_string()));
        if self.subdomains == 0 || self.points == 0 || self.iterations == 0 || self.steps == 0 {
            return bad("subdomains, points, iterations and steps must all be positive");
        }
        if self.points <= 2 * self.steps {
            return bad("points per subdomain must exceed twice the steps per iteration");
        }
        if !(self.courant > 0.0 && self.courant <= 1.0) {
            return bad("Courant number must lie in (0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StencilConfig {
    pub shape: StencilShape,
    pub variant: StencilVariant,
    pub replay_n: usize,
    pub replicate_n: usize,
    pub error_p: f64,
    pub fault_kind: FaultKind,
    pub seed: u64,
    pub cores: usize,
}

impl StencilConfig {
    pub fn new(shape: StencilShape, variant: StencilVariant) -> Self {
        Self {
            shape,
            variant,
            replay_n: 3,
            replicate_n: 3,
            error_p: 0.0,
            fault_kind: FaultKind::Loud,
            seed: 0,
            cores: RuntimeConfig::available().worker_count,
        }
    }

    pub fn validate(&self) -> Result<(), StencilError> {
        self.shape.validate()?;
        if self.replay_n == 0 || self.replicate_n == 0 {
            return Err(StencilError::Config("replay_n and replicate_n must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.error_p) {
            return Err(StencilError::Config(format!("error_p {} outside [0, 1)", self.error_p)));
        }
        if self.cores == 0 {
            return Err(StencilError::Runtime(ConfigError::NoWorkers));
        }
        Ok(())
    }

    fn fault_model(&self) -> Result<FaultModel, StencilError> {
        Ok(FaultModel::with_probability(self.error_p, self.fault_kind, self.seed)?)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StencilError {
    #[error("invalid stencil configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Fault(#[from] FaultModelError),
    #[error(transparent)]
    Runtime(#[from] ConfigError),
    #[error("stencil run failed: {error}")]
    Failed { error: ErrorPayload, report: StencilReport },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StencilReport {
    pub wall_time_s: f64,
    pub tasks_launched: u64,
    /// Kernel invocations, including replayed and replicated ones.
    pub executions: u64,
    pub injected_failures: u64,
    /// Results rejected by the checksum validator.
    pub rejected_results: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StencilRun {
    pub field: Vec<f64>,
    pub report: StencilReport,
}

/// `sin(2 pi x)` sampled at `x_j = j / N` on the global grid.
pub fn initial_field(shape: &StencilShape) -> Vec<f64> {
    let n = shape.total_cells();
    (0..n).map(|j| (2.0 * PI * j as f64 / n as f64).sin()).collect()
}

/// Starts a pool with `cfg.cores` workers and runs from [`initial_field`].
/// Pool start-up and shutdown are not part of the reported wall time.
pub fn run_stencil(cfg: &StencilConfig) -> Result<StencilRun, StencilError> {
    cfg.validate()?;
    let pool = ThreadPool::start(RuntimeConfig::new(cfg.cores, QueuePolicy::WorkStealing))?;
    let out = run_stencil_on(pool.runtime(), cfg, &initial_field(&cfg.shape));
    pool.shutdown();
    out
}

pub fn run_stencil_on(rt: &Runtime, cfg: &StencilConfig, initial: &[f64]) -> Result<StencilRun, StencilError> {
    cfg.validate()?;
    let shape = cfg.shape;
    if initial.len() != shape.total_cells() {
        return Err(StencilError::Config(format!(
            "initial field has {} cells, expected {}",
            initial.len(),
            shape.total_cells()
        )));
    }
    let s = shape.subdomains;
    let injector = FaultInjector::new(cfg.fault_model()?);
    let executions = Arc::new(AtomicU64::new(0));
    let rejected = Arc::new(AtomicU64::new(0));

    let start = Instant::now();
    let mut current: Vec<TaskHandle<StencilOutput>> = initial
        .chunks(shape.points)
        .enumerate()
        .map(|(i, chunk)| {
            let subdomain = Subdomain::new(i, chunk.to_vec());
            let input_sum = subdomain.sum();
            TaskHandle::ready(StencilOutput {
                subdomain,
                witness: ChecksumWitness {
                    input_sum,
                    left_flux_sum: 0.0,
                    right_flux_sum: 0.0,
                    output_sum: input_sum,
                },
            })
        })
        .collect();

    for iteration in 0..shape.iterations {
        let next = (0..s)
            .map(|i| {
                let deps = vec![
                    current[(i + s - 1) % s].clone(),
                    current[i].clone(),
                    current[(i + 1) % s].clone(),
                ];
                let key = (iteration * s + i) as u64;
                let injector = injector.clone();
                let executions = Arc::clone(&executions);
                let steps = shape.steps;
                let nu = shape.courant;
                let kernel = move |v: &[StencilOutput]| {
                    executions.fetch_add(1, Ordering::Relaxed);
                    let attempt = current_attempt().unwrap_or(0) as u64;
                    subdomain_task(
                        &v[0].subdomain,
                        &v[1].subdomain,
                        &v[2].subdomain,
                        steps,
                        nu,
                        &injector,
                        DrawSite::Keyed { task: key, attempt },
                    )
                };
                match cfg.variant {
                    StencilVariant::PureDataflow => rt.dataflow(deps, move |v| kernel(&v)),
                    StencilVariant::Replay => dataflow_replay(rt, cfg.replay_n, kernel, deps),
                    StencilVariant::ReplayChecksum => {
                        let rejected = Arc::clone(&rejected);
                        let valf = move |out: &StencilOutput| {
                            let ok = validate_checksum(out);
                            if !ok {
                                rejected.fetch_add(1, Ordering::Relaxed);
                            }
                            ok
                        };
                        dataflow_replay_validate(rt, cfg.replay_n, valf, kernel, deps)
                    }
                    StencilVariant::Replicate => dataflow_replicate(rt, cfg.replicate_n, kernel, deps),
                }
            })
            .collect();
        current = next;
    }

    let mut field = Vec::with_capacity(shape.total_cells());
    let mut failure = None;
    for h in &current {
        match h.get() {
            Ok(out) => field.extend_from_slice(&out.subdomain.values),
            Err(e) => {
                failure.get_or_insert(e);
            }
        }
    }
    let wall_time_s = start.elapsed().as_secs_f64();
    rt.wait_idle();

    let report = StencilReport {
        wall_time_s,
        tasks_launched: shape.total_tasks(),
        executions: executions.load(Ordering::SeqCst),
        injected_failures: injector.injected(),
        rejected_results: rejected.load(Ordering::SeqCst),
    };
    match failure {
        Some(error) => Err(StencilError::Failed { error, report }),
        None => Ok(StencilRun { field, report }),
    }
}
