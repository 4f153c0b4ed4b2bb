//! Protocol execution: site workers, the coordinator, and two transports.
//!
//! Sites compute their local block, ship raw columns to their schedule
//! successors, compute a cross block for every predecessor block they
//! receive, and forward all covariance blocks to the coordinator, whose
//! endpoint id is `t`. The coordinator keys blocks by site pair, merges them
//! and runs the eigen-decomposition.

mod actors;
mod inproc;
mod metrics;
mod tcp;

use std::time::{Duration, Instant};

use dcm_core::{
    centralized_covariance, symmetric_eigen, ColumnBlock, CovarianceError, DenseMatrix, EigenDecomposition, EigenError,
    GlobalCovariance, MatrixError, MergeError, Schedule, SiteId, WireError,
};
use thiserror::Error;

pub use metrics::{EdgeMetrics, RunMetrics, SiteMetrics};

pub const DEFAULT_DEADLINE: Duration = Duration::from_secs(60);

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Transport {
    InProcess,
    Tcp,
}

/// Test hooks for negative controls.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Site 1 flips the lowest mantissa bit of the first entry of the first
    /// cross block it computes. The merge still succeeds.
    CorruptCrossBlock,
    /// Site 1 never sends its cross blocks or its `Done`.
    SilentSite,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub transport: Transport,
    pub deadline: Duration,
    pub fault: Option<Fault>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { transport: Transport::InProcess, deadline: DEFAULT_DEADLINE, fault: None }
    }
}

impl RunConfig {
    pub fn with_transport(transport: Transport) -> Self {
        Self { transport, ..Self::default() }
    }
}

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("wire format: {0}")]
    Wire(#[from] WireError),
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("incomplete coverage: {0}")]
    Coverage(#[from] MergeError),
    #[error("deadline of {deadline:?} passed with {received} of {expected} covariance blocks and {done} of {sites} sites done")]
    Timeout { deadline: Duration, received: usize, expected: usize, done: usize, sites: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Covariance(#[from] CovarianceError),
    #[error(transparent)]
    Eigen(#[from] EigenError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
}

impl From<std::io::Error> for RuntimeError {
    fn from(e: std::io::Error) -> Self {
        Self::Transport(e.to_string())
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub covariance: GlobalCovariance,
    pub eigen: EigenDecomposition,
    pub metrics: RunMetrics,
}

/// Checks sites are `0..t` in order with a shared row count of at least two.
fn check_blocks(blocks: &[ColumnBlock]) -> Result<usize, RuntimeError> {
    let Some(first) = blocks.first() else {
        return Err(RuntimeError::InvalidInput("no blocks".into()));
    };
    for (i, b) in blocks.iter().enumerate() {
        if b.site() != i {
            return Err(RuntimeError::InvalidInput(format!("block {i} belongs to site {}", b.site())));
        }
        if b.rows() != first.rows() {
            return Err(CovarianceError::RowCountMismatch(first.rows(), b.rows()).into());
        }
    }
    if first.rows() < 2 {
        return Err(CovarianceError::TooFewRows(first.rows()).into());
    }
    Ok(blocks.iter().map(ColumnBlock::width).sum())
}

pub fn run_distributed(
    blocks: &[ColumnBlock],
    schedule: &Schedule,
    config: &RunConfig,
) -> Result<RunOutput, RuntimeError> {
    let total_cols = check_blocks(blocks)?;
    if schedule.sites() != blocks.len() {
        return Err(RuntimeError::InvalidInput(format!(
            "schedule covers {} sites, {} blocks given",
            schedule.sites(),
            blocks.len()
        )));
    }
    let start = Instant::now();
    let (coordinator, mut metrics) = match config.transport {
        Transport::InProcess => inproc::execute(blocks, schedule, config)?,
        Transport::Tcp => tcp::execute(blocks, schedule, config)?,
    };

    let t0 = Instant::now();
    let covariance = coordinator.merge(total_cols)?;
    metrics.merge_ms = metrics::ms(t0.elapsed());

    let t0 = Instant::now();
    let eigen = symmetric_eigen(&covariance)?;
    metrics.eigen_ms = metrics::ms(t0.elapsed());
    metrics.end_to_end_ms = metrics::ms(start.elapsed());
    Ok(RunOutput { covariance, eigen, metrics })
}

/// Reassembles the blocks into one matrix in global column order and runs
/// the single-machine path.
pub fn run_centralized(blocks: &[ColumnBlock]) -> Result<RunOutput, RuntimeError> {
    let total_cols = check_blocks(blocks)?;
    let start = Instant::now();
    let full = assemble(blocks, total_cols)?;

    let t0 = Instant::now();
    let covariance = centralized_covariance(&full)?;
    let compute_ms = metrics::ms(t0.elapsed());

    let t0 = Instant::now();
    let eigen = symmetric_eigen(&covariance)?;
    let eigen_ms = metrics::ms(t0.elapsed());
    let metrics =
        RunMetrics { compute_ms, eigen_ms, end_to_end_ms: metrics::ms(start.elapsed()), ..RunMetrics::default() };
    Ok(RunOutput { covariance, eigen, metrics })
}

fn assemble(blocks: &[ColumnBlock], total_cols: usize) -> Result<DenseMatrix, RuntimeError> {
    let rows = blocks[0].rows();
    let mut owner: Vec<Option<(usize, usize)>> = vec![None; total_cols];
    for (b, block) in blocks.iter().enumerate() {
        for (local, &g) in block.global_cols().iter().enumerate() {
            let slot = owner
                .get_mut(g)
                .ok_or_else(|| RuntimeError::InvalidInput(format!("global column {g} beyond {total_cols}")))?;
            if slot.replace((b, local)).is_some() {
                return Err(RuntimeError::InvalidInput(format!("global column {g} held by two sites")));
            }
        }
    }
    let owner = owner
        .into_iter()
        .enumerate()
        .map(|(g, o)| o.ok_or_else(|| RuntimeError::InvalidInput(format!("global column {g} held by no site"))))
        .collect::<Result<Vec<_>, _>>()?;
    let mut values = Vec::with_capacity(rows * total_cols);
    for r in 0..rows {
        values.extend(owner.iter().map(|&(b, c)| blocks[b].data().get(r, c)));
    }
    Ok(DenseMatrix::new(rows, total_cols, values, None)?)
}

pub(crate) fn coordinator_id(sites: usize) -> SiteId {
    sites
}
