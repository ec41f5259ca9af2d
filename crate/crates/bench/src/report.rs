//! Report rows, CSV/JSON emission and the stencil field dump format.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

/// One campaign cell: its configuration keys plus the measurements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub bench: String,
    pub variant: String,
    pub cores: usize,
    pub grain_us: Option<f64>,
    pub error_p: f64,
    pub n: usize,
    pub tasks: u64,
    pub subdomains: Option<usize>,
    pub points: Option<usize>,
    pub iterations: Option<usize>,
    pub steps: Option<usize>,
    pub courant: Option<f64>,
    pub fault_kind: String,
    pub seed: u64,
    pub runs_averaged: usize,
    pub wall_time_mean_s: Option<f64>,
    pub wall_time_stddev_s: Option<f64>,
    pub baseline_wall_time_s: Option<f64>,
    pub amortized_overhead_per_task_us: Option<f64>,
    pub pct_extra_time: Option<f64>,
    pub tasks_launched: u64,
    pub executions: u64,
    pub injected_failures: u64,
    pub rejected_results: u64,
    pub failed_tasks: u64,
    pub wrong_results: u64,
    pub status: String,
}

pub const STATUS_OK: &str = "ok";

impl ReportRow {
    pub fn is_ok(&self) -> bool {
        self.status == STATUS_OK
    }

    /// Blanks every wall-clock derived column.
    pub fn redact_timing(&mut self) {
        self.wall_time_mean_s = None;
        self.wall_time_stddev_s = None;
        self.baseline_wall_time_s = None;
        self.amortized_overhead_per_task_us = None;
        self.pct_extra_time = None;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, thiserror::Error)]
pub enum EmitError {
    #[error("no results")]
    NoResults,
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub fn render(rows: &[ReportRow], format: OutputFormat) -> Result<Vec<u8>, EmitError> {
    if rows.is_empty() {
        return Err(EmitError::NoResults);
    }
    match format {
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for row in rows {
                w.serialize(row)?;
            }
            w.into_inner().map_err(|e| EmitError::Csv(e.into_error().into()))
        }
        OutputFormat::Json => {
            let mut out = serde_json::to_vec_pretty(rows)?;
            out.push(b'\n');
            Ok(out)
        }
    }
}

pub fn parse_rows(data: &[u8], format: OutputFormat) -> Result<Vec<ReportRow>, EmitError> {
    match format {
        OutputFormat::Csv => csv::Reader::from_reader(data)
            .deserialize()
            .collect::<Result<_, _>>()
            .map_err(EmitError::from),
        OutputFormat::Json => Ok(serde_json::from_slice(data)?),
    }
}

/// Writes `rows` to `path` through a temporary file in the same directory
/// followed by a rename, or to stdout when `path` is `None`.
pub fn emit(rows: &[ReportRow], format: OutputFormat, path: Option<&Path>) -> Result<(), EmitError> {
    let bytes = render(rows, format)?;
    match path {
        Some(path) => write_atomic(path, &bytes),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(&bytes)
                .and_then(|_| out.flush())
                .map_err(|source| EmitError::Io {
                    path: PathBuf::from("<stdout>"),
                    source,
                })
        }
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), EmitError> {
    let io_err = |source| EmitError::Io {
        path: path.to_path_buf(),
        source,
    };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err)?;
    tmp.write_all(bytes).map_err(io_err)?;
    tmp.as_file().sync_all().map_err(io_err)?;
    tmp.persist(path).map_err(|e| io_err(e.error))?;
    Ok(())
}

pub const FIELD_MAGIC: &[u8; 4] = b"RST1";
pub const FIELD_HEADER_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum DumpFormat {
    /// 16-byte header (`RST1`, u32 S, u32 D, u32 reserved) then S*D
    /// little-endian f64.
    #[default]
    Bin,
    /// One value per line.
    Csv,
}

#[derive(Debug, thiserror::Error)]
pub enum DumpError {
    #[error("field has {len} values, expected {subdomains} x {points}")]
    Shape {
        len: usize,
        subdomains: usize,
        points: usize,
    },
    #[error("malformed field dump: {0}")]
    Malformed(String),
    #[error(transparent)]
    Emit(#[from] EmitError),
}

pub fn encode_field(field: &[f64], subdomains: usize, points: usize, format: DumpFormat) -> Result<Vec<u8>, DumpError> {
    if field.len() != subdomains * points {
        return Err(DumpError::Shape {
            len: field.len(),
            subdomains,
            points,
        });
    }
    let dims = |x: usize| u32::try_from(x).map_err(|_| DumpError::Malformed(format!("dimension {x} exceeds u32")));
    Ok(match format {
        DumpFormat::Bin => {
            let mut out = Vec::with_capacity(FIELD_HEADER_LEN + 8 * field.len());
            out.extend_from_slice(FIELD_MAGIC);
            out.extend_from_slice(&dims(subdomains)?.to_le_bytes());
            out.extend_from_slice(&dims(points)?.to_le_bytes());
            out.extend_from_slice(&0_u32.to_le_bytes());
            for v in field {
                out.extend_from_slice(&v.to_le_bytes());
            }
            out
        }
        DumpFormat::Csv => {
            let mut out = String::with_capacity(24 * field.len());
            for v in field {
                out.push_str(&v.to_string());
                out.push('\n');
            }
            out.into_bytes()
        }
    })
}

/// Parses a binary dump into `(subdomains, points, field)`.
pub fn decode_field(bytes: &[u8]) -> Result<(usize, usize, Vec<f64>), DumpError> {
    if bytes.len() < FIELD_HEADER_LEN || &bytes[..4] != FIELD_MAGIC {
        return Err(DumpError::Malformed("missing RST1 header".into()));
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes")) as usize;
    let (s, d) = (word(4), word(8));
    let body = &bytes[FIELD_HEADER_LEN..];
    if body.len() != 8 * s * d {
        return Err(DumpError::Malformed(format!(
            "payload of {} bytes does not hold {s} x {d} values",
            body.len()
        )));
    }
    let field = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok((s, d, field))
}

pub fn write_field_dump(
    path: &Path,
    field: &[f64],
    subdomains: usize,
    points: usize,
    format: DumpFormat,
) -> Result<(), DumpError> {
    let bytes = encode_field(field, subdomains, points, format)?;
    write_atomic(path, &bytes)?;
    Ok(())
}

pub fn read_field_dump(path: &Path) -> Result<(usize, usize, Vec<f64>), DumpError> {
    let bytes = fs::read(path).map_err(|source| EmitError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_field(&bytes)
}
