//! JSON run reports and the binary matrix dump.

use std::io::{self, Read, Write};

use dcm_core::{build_schedule, distributed_cost, CostReport, GlobalCovariance, Schedule};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::runtime::{RunMetrics, RunOutput, Transport};

pub const REPORT_VERSION: u32 = 1;
pub const TOP_EIGENVALUES: usize = 10;
pub const DUMP_MAGIC: [u8; 4] = *b"DCMM";
pub const DUMP_HEADER_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Centralized,
    Distributed,
}

/// SHA-256 over the row-major little-endian binary64 encoding of the full
/// matrix, as lowercase hex.
pub fn matrix_checksum(c: &GlobalCovariance) -> String {
    hex::encode(Sha256::digest(c.to_le_bytes()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub report_version: u32,
    pub mode: Mode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transport: Option<Transport>,
    pub partitions: usize,
    pub dim: usize,
    pub matrix_checksum: String,
    pub top_eigenvalues: Vec<f64>,
    pub eigen_sweeps: usize,
    pub metrics: RunMetrics,
    /// Predecessor lists, one per site; empty for centralized runs.
    pub schedule: Vec<Vec<usize>>,
}

impl RunReport {
    pub fn new(
        mode: Mode,
        transport: Option<Transport>,
        partitions: usize,
        out: &RunOutput,
        schedule: Option<&Schedule>,
    ) -> Self {
        Self {
            report_version: REPORT_VERSION,
            mode,
            transport,
            partitions,
            dim: out.covariance.dim(),
            matrix_checksum: matrix_checksum(&out.covariance),
            top_eigenvalues: out.eigen.eigenvalues.iter().take(TOP_EIGENVALUES).copied().collect(),
            eigen_sweeps: out.eigen.sweeps,
            metrics: out.metrics.clone(),
            schedule: schedule.map(|s| s.lists().to_vec()).unwrap_or_default(),
        }
    }
}

/// One row of a centralized-versus-distributed comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub partitions: usize,
    pub widths: Vec<usize>,
    pub names: Vec<String>,
    pub equal: bool,
    pub centralized: RunReport,
    pub distributed: RunReport,
    pub centralized_ms: f64,
    /// Critical path of the distributed covariance computation.
    pub distributed_ms: f64,
    pub measured_speedup: f64,
    pub cost_model: CostReport,
}

impl ComparisonRow {
    pub fn new(names: Vec<String>, widths: Vec<usize>, centralized: RunReport, distributed: RunReport) -> Self {
        let schedule = build_schedule(widths.len());
        let cost_model = distributed_cost(&widths, &schedule).expect("widths match the schedule and are non-zero");
        let centralized_ms = centralized.metrics.covariance_ms();
        let distributed_ms = distributed.metrics.covariance_ms();
        Self {
            partitions: widths.len(),
            equal: centralized.matrix_checksum == distributed.matrix_checksum,
            names,
            widths,
            centralized_ms,
            distributed_ms,
            measured_speedup: if distributed_ms > 0.0 { centralized_ms / distributed_ms } else { 1.0 },
            centralized,
            distributed,
            cost_model,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub report_version: u32,
    pub transport: Transport,
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonReport {
    /// Tab-separated `partitions  centralized_ms  distributed_ms`, one line
    /// per row, with a `#` header.
    pub fn plot_data(&self) -> String {
        let mut s = String::from("# partitions\tcentralized_ms\tdistributed_ms\n");
        for r in &self.rows {
            s.push_str(&format!("{}\t{:.3}\t{:.3}\n", r.partitions, r.centralized_ms, r.distributed_ms));
        }
        s
    }
}

/// `DCMM`, u32 dimension, eight reserved zero bytes, then the matrix as
/// row-major little-endian binary64.
pub fn write_matrix_dump<W: Write>(c: &GlobalCovariance, mut out: W) -> io::Result<()> {
    let dim =
        u32::try_from(c.dim()).map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "dimension exceeds u32"))?;
    out.write_all(&DUMP_MAGIC)?;
    out.write_all(&dim.to_le_bytes())?;
    out.write_all(&0u64.to_le_bytes())?;
    out.write_all(&c.to_le_bytes())?;
    out.flush()
}

/// Reads a dump back as `(dim, row-major values)`.
pub fn read_matrix_dump<R: Read>(mut input: R) -> io::Result<(usize, Vec<f64>)> {
    let bad = |msg: &str| io::Error::new(io::ErrorKind::InvalidData, msg.to_string());
    let mut header = [0u8; DUMP_HEADER_LEN];
    input.read_exact(&mut header)?;
    if header[..4] != DUMP_MAGIC {
        return Err(bad("not a matrix dump"));
    }
    let dim = u32::from_le_bytes(header[4..8].try_into().expect("4 bytes")) as usize;
    let mut body = Vec::new();
    input.read_to_end(&mut body)?;
    if body.len() != dim * dim * 8 {
        return Err(bad("matrix dump length does not match its dimension"));
    }
    let values = body.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes"))).collect();
    Ok((dim, values))
}

/// JSON sidecar describing a dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpHeader {
    pub format: String,
    pub dim: usize,
    pub byte_order: String,
    pub layout: String,
    pub matrix_checksum: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

impl DumpHeader {
    pub fn for_matrix(c: &GlobalCovariance) -> Self {
        Self {
            format: "DCMM".into(),
            dim: c.dim(),
            byte_order: "little-endian".into(),
            layout: "row-major binary64 after a 16-byte header".into(),
            matrix_checksum: matrix_checksum(c),
            labels: c.labels().map(<[String]>::to_vec),
        }
    }
}
