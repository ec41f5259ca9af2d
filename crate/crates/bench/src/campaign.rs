//! Campaigns: the Cartesian product of sweep axes, one pool per cell, run
//! strictly one after another.

use std::path::PathBuf;
use std::time::Duration;

use resil_core::fault::FaultKind;
use resil_core::{QueuePolicy, RuntimeConfig, ThreadPool};

use crate::artificial::{run_artificial, ArtificialConfig, BenchReport, Variant};
use crate::report::{DumpFormat, OutputFormat, ReportRow, STATUS_OK};
use crate::stats::{mean, stddev};
use crate::stencil::{initial_field, run_stencil_on, StencilConfig, StencilError, StencilShape, StencilVariant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Bench {
    #[default]
    Artificial,
    Stencil,
}

impl Bench {
    pub fn name(self) -> &'static str {
        match self {
            Bench::Artificial => "artificial",
            Bench::Stencil => "stencil",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Workload {
    Artificial {
        variants: Vec<Variant>,
        tasks: u64,
        grains_us: Vec<f64>,
    },
    Stencil {
        variants: Vec<StencilVariant>,
        shape: StencilShape,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Campaign {
    pub workload: Workload,
    pub error_ps: Vec<f64>,
    pub cores: Vec<usize>,
    pub ns: Vec<usize>,
    pub fault_kind: FaultKind,
    pub reps: usize,
    pub seed: u64,
    pub no_timing: bool,
    pub out: Option<PathBuf>,
    pub format: OutputFormat,
    pub dump_field: Option<PathBuf>,
    pub dump_format: DumpFormat,
}

impl Campaign {
    pub fn artificial(variants: Vec<Variant>) -> Self {
        Self::with_workload(Workload::Artificial {
            variants,
            tasks: crate::artificial::DESK_TASK_COUNT,
            grains_us: vec![200.0],
        })
    }

    pub fn stencil(variants: Vec<StencilVariant>, shape: StencilShape) -> Self {
        Self::with_workload(Workload::Stencil { variants, shape })
    }

    fn with_workload(workload: Workload) -> Self {
        Self {
            workload,
            error_ps: vec![0.0],
            cores: vec![RuntimeConfig::available().worker_count],
            ns: vec![3],
            fault_kind: FaultKind::Loud,
            reps: 10,
            seed: 0,
            no_timing: false,
            out: None,
            format: OutputFormat::Csv,
            dump_field: None,
            dump_format: DumpFormat::Bin,
        }
    }

    pub fn bench(&self) -> Bench {
        match self.workload {
            Workload::Artificial { .. } => Bench::Artificial,
            Workload::Stencil { .. } => Bench::Stencil,
        }
    }

    pub fn cell_count(&self) -> usize {
        let axes = self.error_ps.len() * self.cores.len() * self.ns.len();
        match &self.workload {
            Workload::Artificial {
                variants, grains_us, ..
            } => axes * variants.len() * grains_us.len(),
            Workload::Stencil { variants, .. } => axes * variants.len(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.reps == 0 {
            return Err("--reps must be at least 1".into());
        }
        if let Some(p) = self.error_ps.iter().find(|p| !(0.0..1.0).contains(*p)) {
            return Err(format!("--error-p {p} outside [0, 1)"));
        }
        if self.cores.contains(&0) {
            return Err("--cores must be positive".into());
        }
        if self.ns.contains(&0) {
            return Err("--n must be positive".into());
        }
        match &self.workload {
            Workload::Artificial {
                variants,
                tasks,
                grains_us,
            } => {
                if *tasks == 0 {
                    return Err("--tasks must be positive".into());
                }
                if let Some(g) = grains_us.iter().find(|g| !(g.is_finite() && **g >= 0.0)) {
                    return Err(format!("--grain-us {g} must be a non-negative number"));
                }
                if variants.is_empty() {
                    return Err("no variants selected".into());
                }
            }
            Workload::Stencil { variants, shape } => {
                shape.validate().map_err(|e| e.to_string())?;
                if variants.is_empty() {
                    return Err("no variants selected".into());
                }
            }
        }
        if self.dump_field.is_some() && (self.bench() != Bench::Stencil || self.cell_count() != 1) {
            return Err("--dump-field needs exactly one stencil cell".into());
        }
        if self.error_ps.is_empty() || self.cores.is_empty() || self.ns.is_empty() {
            return Err("every sweep axis needs at least one value".into());
        }
        Ok(())
    }
}

pub fn fault_kind_name(kind: FaultKind) -> &'static str {
    match kind {
        FaultKind::Loud => "loud",
        FaultKind::Silent => "silent",
    }
}

/// Rows of a campaign plus, for a single stencil cell, its final field.
#[derive(Debug, Clone, PartialEq)]
pub struct CampaignOutput {
    pub rows: Vec<ReportRow>,
    pub field: Option<Vec<f64>>,
}

impl CampaignOutput {
    pub fn all_ok(&self) -> bool {
        self.rows.iter().all(ReportRow::is_ok)
    }
}

/// Runs every cell. A failing cell is recorded in its row's status and the
/// campaign moves on.
pub fn run_campaign(c: &Campaign) -> CampaignOutput {
    let mut rows = Vec::with_capacity(c.cell_count());
    let mut field = None;
    match &c.workload {
        Workload::Artificial {
            variants,
            tasks,
            grains_us,
        } => {
            for &variant in variants {
                for &cores in &c.cores {
                    for &grain_us in grains_us {
                        for &error_p in &c.error_ps {
                            for &n in &c.ns {
                                let cfg = ArtificialConfig {
                                    task_count: *tasks,
                                    grain: Duration::from_secs_f64(grain_us * 1e-6),
                                    error_p,
                                    fault_kind: c.fault_kind,
                                    replay_n: n,
                                    replicate_n: n,
                                    cores,
                                    variant,
                                    runs: c.reps,
                                    seed: c.seed,
                                    queue_policy: QueuePolicy::WorkStealing,
                                };
                                rows.push(artificial_cell(&cfg, grain_us));
                            }
                        }
                    }
                }
            }
        }
        Workload::Stencil { variants, shape } => {
            let initial = initial_field(shape);
            for &variant in variants {
                for &cores in &c.cores {
                    for &error_p in &c.error_ps {
                        for &n in &c.ns {
                            let mut cfg = StencilConfig::new(*shape, variant);
                            cfg.replay_n = n;
                            cfg.replicate_n = n;
                            cfg.error_p = error_p;
                            cfg.fault_kind = c.fault_kind;
                            cfg.seed = c.seed;
                            cfg.cores = cores;
                            let (row, f) = stencil_cell(&cfg, &initial, c.reps);
                            rows.push(row);
                            field = f;
                        }
                    }
                }
            }
        }
    }
    if c.no_timing {
        rows.iter_mut().for_each(ReportRow::redact_timing);
    }
    CampaignOutput { rows, field }
}

fn blank_row(bench: Bench, variant: &str, cores: usize, error_p: f64, n: usize, fault_kind: FaultKind) -> ReportRow {
    ReportRow {
        bench: bench.name().into(),
        variant: variant.into(),
        cores,
        grain_us: None,
        error_p,
        n,
        tasks: 0,
        subdomains: None,
        points: None,
        iterations: None,
        steps: None,
        courant: None,
        fault_kind: fault_kind_name(fault_kind).into(),
        seed: 0,
        runs_averaged: 0,
        wall_time_mean_s: None,
        wall_time_stddev_s: None,
        baseline_wall_time_s: None,
        amortized_overhead_per_task_us: None,
        pct_extra_time: None,
        tasks_launched: 0,
        executions: 0,
        injected_failures: 0,
        rejected_results: 0,
        failed_tasks: 0,
        wrong_results: 0,
        status: STATUS_OK.into(),
    }
}

fn join_status(problems: Vec<String>) -> String {
    if problems.is_empty() {
        STATUS_OK.into()
    } else {
        problems.join("; ")
    }
}

pub fn artificial_cell(cfg: &ArtificialConfig, grain_us: f64) -> ReportRow {
    let mut row = blank_row(
        Bench::Artificial,
        cfg.variant.name(),
        cfg.cores,
        cfg.error_p,
        cfg.n(),
        cfg.fault_kind,
    );
    row.grain_us = Some(grain_us);
    row.tasks = cfg.task_count;
    row.seed = cfg.seed;
    match run_artificial(cfg) {
        Ok(r) => {
            fill_artificial(&mut row, &r);
            row.status = join_status(artificial_problems(&r));
        }
        Err(e) => row.status = format!("error: {e}"),
    }
    row
}

fn fill_artificial(row: &mut ReportRow, r: &BenchReport) {
    row.runs_averaged = r.runs_averaged;
    row.wall_time_mean_s = Some(r.wall_time_mean_s());
    row.wall_time_stddev_s = Some(r.wall_time_stddev_s());
    row.baseline_wall_time_s = r.baseline_wall_time_s();
    row.amortized_overhead_per_task_us = r.amortized_overhead_per_task_s().map(|s| s * 1e6);
    row.pct_extra_time = r.pct_extra_time();
    row.tasks_launched = r.tasks_launched;
    row.executions = r.executions;
    row.injected_failures = r.injected_failures;
    row.failed_tasks = r.failed_tasks;
    row.wrong_results = r.wrong_results;
}

/// Resilience-correctness checks for one artificial cell.
pub fn artificial_problems(r: &BenchReport) -> Vec<String> {
    let cfg = &r.config;
    let mut out = Vec::new();
    if r.failed_tasks > 0 {
        out.push(format!("{} tasks failed", r.failed_tasks));
    }
    if cfg.variant.is_replicate() && r.executions != cfg.replicate_n as u64 * r.tasks_launched {
        out.push(format!(
            "replicate executed {} times, expected {}",
            r.executions,
            cfg.replicate_n as u64 * r.tasks_launched
        ));
    }
    let must_be_exact = cfg.fault_kind == FaultKind::Loud || cfg.variant.is_validated() || cfg.error_p == 0.0;
    if must_be_exact && r.wrong_results > 0 {
        out.push(format!("{} results differ from 42", r.wrong_results));
    }
    out
}

/// Runs one stencil cell `reps` times, each paired with a fault-free
/// pure-dataflow reference run on the same pool. Returns the row and the
/// final field of the last successful repetition.
pub fn stencil_cell(cfg: &StencilConfig, initial: &[f64], reps: usize) -> (ReportRow, Option<Vec<f64>>) {
    let n = match cfg.variant {
        StencilVariant::Replicate => cfg.replicate_n,
        _ => cfg.replay_n,
    };
    let mut row = blank_row(
        Bench::Stencil,
        cfg.variant.name(),
        cfg.cores,
        cfg.error_p,
        n,
        cfg.fault_kind,
    );
    let shape = cfg.shape;
    row.tasks = shape.total_tasks();
    row.subdomains = Some(shape.subdomains);
    row.points = Some(shape.points);
    row.iterations = Some(shape.iterations);
    row.steps = Some(shape.steps);
    row.courant = Some(shape.courant);
    row.seed = cfg.seed;

    if let Err(e) = cfg.validate() {
        row.status = format!("error: {e}");
        return (row, None);
    }
    let pool = match ThreadPool::start(RuntimeConfig::new(cfg.cores, QueuePolicy::WorkStealing)) {
        Ok(p) => p,
        Err(e) => {
            row.status = format!("error: {e}");
            return (row, None);
        }
    };
    let rt = pool.runtime();
    let mut reference_cfg = cfg.clone();
    reference_cfg.variant = StencilVariant::PureDataflow;
    reference_cfg.error_p = 0.0;

    let mut times = Vec::with_capacity(reps);
    let mut base_times = Vec::with_capacity(reps);
    let mut problems = Vec::new();
    let mut field = None;
    for rep in 0..reps {
        let reference = match run_stencil_on(rt, &reference_cfg, initial) {
            Ok(r) => r,
            Err(e) => {
                problems.push(format!("reference run failed: {e}"));
                break;
            }
        };
        base_times.push(reference.report.wall_time_s);
        let mut run_cfg = cfg.clone();
        run_cfg.seed = cfg.seed.wrapping_add(rep as u64);
        let report = match run_stencil_on(rt, &run_cfg, initial) {
            Ok(run) => {
                let wrong = run
                    .field
                    .iter()
                    .zip(&reference.field)
                    .filter(|(a, b)| a.to_bits() != b.to_bits())
                    .count() as u64;
                row.wrong_results += wrong;
                let detectable = cfg.fault_kind == FaultKind::Loud
                    || cfg.variant == StencilVariant::ReplayChecksum
                    || cfg.error_p == 0.0;
                if detectable && wrong > 0 {
                    problems.push(format!("rep {rep}: {wrong} cells differ from the fault-free field"));
                }
                field = Some(run.field);
                run.report
            }
            Err(StencilError::Failed { error, report }) => {
                row.failed_tasks += 1;
                problems.push(format!("rep {rep}: {}", error.kind));
                report
            }
            Err(e) => {
                problems.push(format!("rep {rep}: {e}"));
                break;
            }
        };
        times.push(report.wall_time_s);
        row.tasks_launched += report.tasks_launched;
        row.executions += report.executions;
        row.injected_failures += report.injected_failures;
        row.rejected_results += report.rejected_results;
        if cfg.variant == StencilVariant::Replicate && report.executions != n as u64 * report.tasks_launched {
            problems.push(format!("rep {rep}: replicate executed {} kernels", report.executions));
        }
        if cfg.variant == StencilVariant::ReplayChecksum
            && cfg.fault_kind == FaultKind::Silent
            && report.rejected_results != report.injected_failures
        {
            problems.push(format!(
                "rep {rep}: {} corrupted executions but {} rejections",
                report.injected_failures, report.rejected_results
            ));
        }
    }
    pool.shutdown();

    row.runs_averaged = times.len();
    if !times.is_empty() {
        let (m, b) = (mean(&times), mean(&base_times));
        row.wall_time_mean_s = Some(m);
        row.wall_time_stddev_s = Some(stddev(&times));
        row.baseline_wall_time_s = Some(b);
        row.amortized_overhead_per_task_us = Some(1e6 * (m - b) / shape.total_tasks() as f64);
        row.pct_extra_time = Some(100.0 * (m - b) / b);
    }
    row.status = join_status(problems);
    (row, field)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_artificial() -> Campaign {
        let mut c = Campaign::artificial(vec![Variant::AsyncReplay, Variant::AsyncReplicate]);
        c.workload = Workload::Artificial {
            variants: vec![Variant::AsyncReplay, Variant::AsyncReplicate],
            tasks: 500,
            grains_us: vec![0.0],
        };
        c.error_ps = vec![0.0, 0.05, 0.3];
        c.cores = vec![2];
        c.reps = 10;
        c
    }

    #[test]
    fn two_variants_three_probabilities_six_rows() {
        let c = tiny_artificial();
        assert_eq!(c.cell_count(), 6);
        let out = run_campaign(&c);
        assert_eq!(out.rows.len(), 6);
        for row in &out.rows {
            assert_eq!(row.runs_averaged, 10);
            if row.error_p == 0.0 {
                assert!(row.is_ok(), "{}", row.status);
            }
            assert!(row.pct_extra_time.is_some());
        }
    }

    #[test]
    fn failed_tasks_mark_the_cell() {
        let mut c = tiny_artificial();
        c.error_ps = vec![0.9];
        c.ns = vec![1];
        c.reps = 1;
        let out = run_campaign(&c);
        assert!(!out.all_ok());
        assert!(out.rows[0].status.contains("tasks failed"));
    }

    #[test]
    fn no_timing_blanks_wall_clock_columns() {
        let mut c = tiny_artificial();
        c.reps = 1;
        c.no_timing = true;
        for row in run_campaign(&c).rows {
            assert_eq!(row.wall_time_mean_s, None);
            assert_eq!(row.pct_extra_time, None);
        }
    }

    #[test]
    fn stencil_cell_records_field() {
        let shape = StencilShape {
            subdomains: 4,
            points: 32,
            iterations: 4,
            steps: 2,
            courant: 0.9,
        };
        let mut c = Campaign::stencil(vec![StencilVariant::Replay], shape);
        c.error_ps = vec![0.2];
        c.ns = vec![10];
        c.cores = vec![2];
        c.reps = 2;
        let out = run_campaign(&c);
        assert_eq!(out.rows.len(), 1);
        let row = &out.rows[0];
        assert!(row.is_ok(), "{}", row.status);
        assert_eq!(row.tasks_launched, 2 * 16);
        assert!(row.injected_failures > 0);
        assert_eq!(out.field.unwrap().len(), 128);
    }

    #[test]
    fn validation_messages() {
        let mut c = tiny_artificial();
        c.error_ps = vec![1.5];
        assert!(c.validate().unwrap_err().contains("--error-p"));
        c = tiny_artificial();
        c.reps = 0;
        assert!(c.validate().unwrap_err().contains("--reps"));
        c = tiny_artificial();
        c.dump_field = Some("x.bin".into());
        assert!(c.validate().is_err());
    }
}
