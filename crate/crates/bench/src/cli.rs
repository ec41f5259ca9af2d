use std::ffi::OsString;
use std::path::PathBuf;

use clap::error::ErrorKind as ClapErrorKind;
use clap::{CommandFactory, Parser, ValueEnum};
use resil_core::fault::FaultKind;
use resil_core::RuntimeConfig;

use crate::artificial::{Variant, DESK_TASK_COUNT};
use crate::campaign::{Bench, Campaign, Workload};
use crate::report::{DumpFormat, OutputFormat};
use crate::stencil::{StencilShape, StencilVariant};

pub const SEED_ENV: &str = "RESIL_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Case {
    #[value(name = "A")]
    A,
    #[value(name = "B")]
    B,
    #[value(name = "desk")]
    Desk,
}

impl Case {
    pub fn shape(self) -> StencilShape {
        match self {
            Case::A => StencilShape::case_a(),
            Case::B => StencilShape::case_b(),
            Case::Desk => StencilShape::desk(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FaultKindArg {
    Loud,
    Silent,
}

impl From<FaultKindArg> for FaultKind {
    fn from(k: FaultKindArg) -> Self {
        match k {
            FaultKindArg::Loud => FaultKind::Loud,
            FaultKindArg::Silent => FaultKind::Silent,
        }
    }
}

fn probability(s: &str) -> Result<f64, String> {
    let p: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if (0.0..1.0).contains(&p) {
        Ok(p)
    } else {
        Err(format!("probability {p} outside [0, 1)"))
    }
}

fn positive_usize(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) | Err(_) => Err(format!("`{s}` is not a positive integer")),
        Ok(v) => Ok(v),
    }
}

fn positive_u64(s: &str) -> Result<u64, String> {
    match s.parse::<u64>() {
        Ok(0) | Err(_) => Err(format!("`{s}` is not a positive integer")),
        Ok(v) => Ok(v),
    }
}

fn grain(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(g) if g.is_finite() && g >= 0.0 => Ok(g),
        _ => Err(format!("`{s}` is not a non-negative duration in microseconds")),
    }
}

fn courant(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(nu) if nu > 0.0 && nu <= 1.0 => Ok(nu),
        _ => Err(format!("Courant number `{s}` outside (0, 1]")),
    }
}

/// Runs benchmark campaigns for the resilient task combinators.
///
/// Every list-valued flag may be repeated; the campaign runs the Cartesian
/// product of all of them.
#[derive(Debug, Parser)]
#[command(name = "resil", version)]
pub struct Args {
    #[arg(long, value_enum, default_value_t = Bench::Artificial)]
    pub bench: Bench,
    /// Variant name; defaults to every variant of the benchmark.
    #[arg(long = "variant")]
    pub variants: Vec<String>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long = "cores", value_parser = positive_usize)]
    pub cores: Vec<usize>,
    #[arg(long = "grain-us", value_parser = grain)]
    pub grain_us: Vec<f64>,
    #[arg(long = "error-p", value_parser = probability)]
    pub error_p: Vec<f64>,
    /// Replay attempts or replicate instances.
    #[arg(long = "n", value_parser = positive_usize)]
    pub n: Vec<usize>,
    #[arg(long, value_parser = positive_u64, default_value_t = DESK_TASK_COUNT)]
    pub tasks: u64,
    #[arg(long = "case", value_enum, default_value_t = Case::Desk)]
    pub case: Case,
    #[arg(long, value_parser = positive_usize)]
    pub subdomains: Option<usize>,
    #[arg(long, value_parser = positive_usize)]
    pub points: Option<usize>,
    #[arg(long, value_parser = positive_usize)]
    pub iterations: Option<usize>,
    #[arg(long, value_parser = positive_usize)]
    pub steps: Option<usize>,
    #[arg(long, value_parser = courant)]
    pub courant: Option<f64>,
    #[arg(long, value_parser = positive_usize, default_value_t = 10)]
    pub reps: usize,
    /// Overridden by the RESIL_SEED environment variable.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = FaultKindArg::Loud)]
    pub fault_kind: FaultKindArg,
    /// Report file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
    pub format: OutputFormat,
    /// Blank every wall-clock column so reports can be diffed.
    #[arg(long)]
    pub no_timing: bool,
    /// Write the final stencil field of a single-cell stencil campaign.
    #[arg(long)]
    pub dump_field: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = DumpFormat::Bin)]
    pub dump_format: DumpFormat,
}

fn usage(kind: ClapErrorKind, msg: impl std::fmt::Display) -> clap::Error {
    Args::command().error(kind, msg)
}

/// Parses `argv` (program name first) into a validated campaign, reading
/// the seed override from the process environment.
pub fn parse_args<I, T>(argv: I) -> Result<Campaign, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    parse_args_with_env(argv, std::env::var(SEED_ENV).ok())
}

pub fn parse_args_with_env<I, T>(argv: I, seed_env: Option<String>) -> Result<Campaign, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = Args::try_parse_from(argv)?;
    let seed = match seed_env {
        Some(s) => s.trim().parse().map_err(|_| {
            usage(
                ClapErrorKind::InvalidValue,
                format!("{SEED_ENV}=`{s}` is not an unsigned integer"),
            )
        })?,
        None => args.seed,
    };
    let workload = match args.bench {
        Bench::Artificial => {
            let variants = parse_variants::<Variant>(&args.variants, &Variant::ALL)?;
            Workload::Artificial {
                variants,
                tasks: args.tasks,
                grains_us: or_default(args.grain_us, 200.0),
            }
        }
        Bench::Stencil => {
            let variants = parse_variants::<StencilVariant>(&args.variants, &StencilVariant::ALL)?;
            let mut shape = args.case.shape();
            shape.subdomains = args.subdomains.unwrap_or(shape.subdomains);
            shape.points = args.points.unwrap_or(shape.points);
            shape.iterations = args.iterations.unwrap_or(shape.iterations);
            shape.steps = args.steps.unwrap_or(shape.steps);
            shape.courant = args.courant.unwrap_or(shape.courant);
            Workload::Stencil { variants, shape }
        }
    };
    let campaign = Campaign {
        workload,
        error_ps: or_default(args.error_p, 0.0),
        cores: or_default(args.cores, RuntimeConfig::available().worker_count),
        ns: or_default(args.n, 3),
        fault_kind: args.fault_kind.into(),
        reps: args.reps,
        seed,
        no_timing: args.no_timing,
        out: args.out,
        format: args.format,
        dump_field: args.dump_field,
        dump_format: args.dump_format,
    };
    campaign
        .validate()
        .map_err(|msg| usage(ClapErrorKind::ValueValidation, msg))?;
    Ok(campaign)
}

fn or_default<T>(v: Vec<T>, default: T) -> Vec<T> {
    if v.is_empty() {
        vec![default]
    } else {
        v
    }
}

fn parse_variants<V>(names: &[String], all: &[V]) -> Result<Vec<V>, clap::Error>
where
    V: std::str::FromStr<Err = String> + Copy,
{
    if names.is_empty() {
        return Ok(all.to_vec());
    }
    names
        .iter()
        .map(|s| {
            s.parse::<V>()
                .map_err(|e| usage(ClapErrorKind::InvalidValue, format!("--variant: {e}")))
        })
        .collect()
}
