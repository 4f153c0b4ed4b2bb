//! Command-line front end.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use dcm_core::{build_schedule, distributed_cost, validate_schedule, DenseMatrix};
use serde::Serialize;
use thiserror::Error;

use crate::ingest::{self, IngestError, PartitionSpec, TableFormat};
use crate::report::{self, ComparisonReport, ComparisonRow, DumpHeader, Mode, RunReport, REPORT_VERSION};
use crate::runtime::{run_centralized, run_distributed, Fault, RunConfig, RunOutput, RuntimeError, Transport};

#[derive(Debug, Parser)]
#[command(name = "dcm", version, about = "Exact covariance and PCA over vertically partitioned data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the predecessor lists for `t` sites and check pair coverage.
    Schedule {
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
        sites: u32,
        #[arg(long)]
        json: bool,
    },
    /// Compute the global covariance and its eigen-decomposition.
    Run {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum, default_value = "distributed")]
        mode: Mode,
        #[arg(long, value_enum, default_value = "in-process")]
        transport: Transport,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the full matrix as a binary dump plus a `.json` sidecar.
        #[arg(long)]
        dump_matrix: Option<PathBuf>,
        #[command(flatten)]
        deadline: DeadlineArg,
    },
    /// Run both modes on the same data and check the matrices match bit for bit.
    Compare {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_enum, default_value = "in-process")]
        transport: Transport,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Tab-separated partitions / centralized_ms / distributed_ms file.
        #[arg(long)]
        plot: Option<PathBuf>,
        /// Negative control: corrupt one cross block in the distributed run.
        #[arg(long, hide = true)]
        inject_fault: bool,
        #[command(flatten)]
        deadline: DeadlineArg,
    },
    /// Evaluate the pair-count cost model.
    CostModel {
        /// Per-site column counts.
        #[arg(long, value_delimiter = ',', conflicts_with_all = ["sites", "gamma"])]
        widths: Option<Vec<usize>>,
        #[arg(long, requires = "gamma")]
        sites: Option<usize>,
        /// Columns per site when all sites are equal.
        #[arg(long, requires = "sites")]
        gamma: Option<usize>,
    },
    /// Write seeded synthetic data.
    Gen {
        #[arg(long, default_value_t = ingest::MFEAT_ROWS)]
        rows: usize,
        #[arg(long, default_value_t = 649)]
        cols: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file; `.csv` selects CSV, anything else whitespace.
        #[arg(long, required_unless_present = "mfeat_dir", conflicts_with = "mfeat_dir")]
        out: Option<PathBuf>,
        /// Instead of one file, write the six Mfeat-layout files here
        /// (`--cols` is ignored).
        #[arg(long)]
        mfeat_dir: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Input tables, joined column-wise in the order given.
    #[arg(required = true, num_args = 1..)]
    pub inputs: Vec<PathBuf>,
    /// Input format; by default `.csv` files are CSV and others whitespace.
    #[arg(long, value_enum)]
    pub format: Option<TableFormat>,
    /// `mfeat-2` .. `mfeat-6`, `mfeat-all` (compare only), `single`, or `equal-N`.
    #[arg(long, conflicts_with = "spec", required_unless_present = "spec")]
    pub preset: Option<String>,
    /// Partition spec JSON file.
    #[arg(long)]
    pub spec: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DeadlineArg {
    /// Protocol deadline in milliseconds.
    #[arg(long = "deadline-ms", env = "DCM_DEADLINE_MS", default_value_t = 60_000)]
    pub deadline_ms: u64,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Data(#[from] IngestError),
    #[error("{0}")]
    Runtime(#[from] RuntimeError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{0}")]
    Mismatch(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Usage(_) => 2,
            Self::Data(_) | Self::Io { .. } => 3,
            Self::Runtime(RuntimeError::Covariance(_) | RuntimeError::Matrix(_) | RuntimeError::InvalidInput(_)) => 3,
            Self::Runtime(_) => 4,
            Self::Mismatch(_) => 5,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

/// Named partition layouts accepted by `--preset`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Preset {
    Mfeat(usize),
    MfeatAll,
    Single,
    Equal(usize),
}

impl Preset {
    pub fn parse(s: &str) -> Result<Self, CliError> {
        let bad = || CliError::Usage(format!("unknown preset {s:?}"));
        match s {
            "mfeat-all" => Ok(Self::MfeatAll),
            "single" => Ok(Self::Single),
            _ => {
                if let Some(n) = s.strip_prefix("mfeat-") {
                    let n: usize = n.parse().map_err(|_| bad())?;
                    if !(2..=6).contains(&n) {
                        return Err(bad());
                    }
                    Ok(Self::Mfeat(n))
                } else if let Some(n) = s.strip_prefix("equal-") {
                    Ok(Self::Equal(n.parse().map_err(|_| bad())?))
                } else {
                    Err(bad())
                }
            }
        }
    }

    /// The specs this preset expands to for a table of `cols` columns.
    pub fn specs(&self, cols: usize) -> Result<Vec<PartitionSpec>, CliError> {
        Ok(match *self {
            Self::Mfeat(n) => vec![ingest::mfeat_preset(n)?],
            Self::MfeatAll => (2..=6).map(ingest::mfeat_preset).collect::<Result<_, _>>()?,
            Self::Single => vec![PartitionSpec::single(cols)],
            Self::Equal(n) => vec![PartitionSpec::equal(cols, n)?],
        })
    }
}

pub fn load_inputs(paths: &[PathBuf], format: Option<TableFormat>) -> Result<DenseMatrix, CliError> {
    let tables = paths
        .iter()
        .map(|p| ingest::load_table(p, format.unwrap_or_else(|| TableFormat::from_path(p))))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ingest::hjoin(&tables)?)
}

fn resolve_specs(data: &DataArgs, cols: usize) -> Result<Vec<PartitionSpec>, CliError> {
    match (&data.preset, &data.spec) {
        (Some(p), _) => Preset::parse(p)?.specs(cols),
        (None, Some(path)) => {
            let json = fs::read_to_string(path).map_err(io_err(path))?;
            Ok(vec![PartitionSpec::from_json(&json)?])
        }
        (None, None) => Err(CliError::Usage("one of --preset or --spec is required".into())),
    }
}

/// Centralized and distributed runs of one partition layout.
pub fn compare_one(m: &DenseMatrix, spec: &PartitionSpec, config: &RunConfig) -> Result<ComparisonRow, CliError> {
    let blocks = ingest::partition_vertical(m, spec)?;
    let schedule = build_schedule(blocks.len());
    let central = run_centralized(&blocks)?;
    let dist = run_distributed(&blocks, &schedule, config)?;
    let names = spec.groups.iter().map(|g| g.name.clone().unwrap_or_else(|| format!("site{}", g.site))).collect();
    Ok(ComparisonRow::new(
        names,
        spec.widths(),
        RunReport::new(Mode::Centralized, None, blocks.len(), &central, None),
        RunReport::new(Mode::Distributed, Some(config.transport), blocks.len(), &dist, Some(&schedule)),
    ))
}

fn emit_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<(), CliError> {
    let json = serde_json::to_string_pretty(value).expect("reports serialize");
    match out {
        Some(path) => fs::write(path, json + "\n").map_err(io_err(path)),
        None => {
            println!("{json}");
            Ok(())
        }
    }
}

fn cmd_schedule(sites: usize, json: bool) -> Result<(), CliError> {
    let s = build_schedule(sites);
    let coverage = validate_schedule(&s);
    if json {
        #[derive(Serialize)]
        struct Out<'a> {
            schedule: &'a dcm_core::Schedule,
            coverage: &'a dcm_core::CoverageReport,
        }
        return emit_json(&Out { schedule: &s, coverage: &coverage }, None);
    }
    let stdout = io::stdout();
    let mut w = stdout.lock();
    let write = |w: &mut io::StdoutLock, line: String| writeln!(w, "{line}").map_err(io_err(Path::new("<stdout>")));
    for k in 0..sites {
        let preds: Vec<String> = s.predecessors(k).iter().map(ToString::to_string).collect();
        write(&mut w, format!("site {k} <- [{}]", preds.join(", ")))?;
    }
    write(
        &mut w,
        format!(
            "valid: {} (pairs covered {}/{}, longest list {}, r = {})",
            coverage.valid, coverage.pairs_covered, coverage.pairs_expected, coverage.max_list_len, coverage.r
        ),
    )?;
    if coverage.valid {
        Ok(())
    } else {
        Err(CliError::Mismatch("schedule does not cover every pair exactly once".into()))
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_run(
    data: &DataArgs,
    mode: Mode,
    transport: Transport,
    out: Option<&Path>,
    dump: Option<&Path>,
    deadline: Duration,
) -> Result<(), CliError> {
    let m = load_inputs(&data.inputs, data.format)?;
    let specs = resolve_specs(data, m.cols())?;
    let [spec] = specs.as_slice() else {
        return Err(CliError::Usage("`run` takes a single partition layout".into()));
    };
    let blocks = ingest::partition_vertical(&m, spec)?;
    let (result, report): (RunOutput, RunReport) = match mode {
        Mode::Centralized => {
            let r = run_centralized(&blocks)?;
            let rep = RunReport::new(mode, None, blocks.len(), &r, None);
            (r, rep)
        }
        Mode::Distributed => {
            let schedule = build_schedule(blocks.len());
            let config = RunConfig { transport, deadline, fault: None };
            let r = run_distributed(&blocks, &schedule, &config)?;
            let rep = RunReport::new(mode, Some(transport), blocks.len(), &r, Some(&schedule));
            (r, rep)
        }
    };
    if let Some(path) = dump {
        let file = fs::File::create(path).map_err(io_err(path))?;
        report::write_matrix_dump(&result.covariance, BufWriter::new(file)).map_err(io_err(path))?;
        let sidecar = path.with_extension("json");
        emit_json(&DumpHeader::for_matrix(&result.covariance), Some(&sidecar))?;
    }
    emit_json(&report, out)
}

fn cmd_compare(
    data: &DataArgs,
    transport: Transport,
    out: Option<&Path>,
    plot: Option<&Path>,
    fault: bool,
    deadline: Duration,
) -> Result<(), CliError> {
    let m = load_inputs(&data.inputs, data.format)?;
    let specs = resolve_specs(data, m.cols())?;
    let config = RunConfig { transport, deadline, fault: fault.then_some(Fault::CorruptCrossBlock) };
    let rows = specs.iter().map(|s| compare_one(&m, s, &config)).collect::<Result<Vec<_>, _>>()?;
    let report = ComparisonReport { report_version: REPORT_VERSION, transport, rows };
    if let Some(path) = plot {
        fs::write(path, report.plot_data()).map_err(io_err(path))?;
    }
    emit_json(&report, out)?;
    let unequal: Vec<usize> = report.rows.iter().filter(|r| !r.equal).map(|r| r.partitions).collect();
    if unequal.is_empty() {
        Ok(())
    } else {
        Err(CliError::Mismatch(format!("distributed and centralized matrices differ for partitions {unequal:?}")))
    }
}

fn cmd_cost_model(widths: Option<Vec<usize>>, sites: Option<usize>, gamma: Option<usize>) -> Result<(), CliError> {
    let widths = match (widths, sites, gamma) {
        (Some(w), _, _) => w,
        (None, Some(t), Some(g)) => vec![g; t],
        _ => return Err(CliError::Usage("give --widths or both --sites and --gamma".into())),
    };
    if widths.is_empty() {
        return Err(CliError::Usage("no widths given".into()));
    }
    let report =
        distributed_cost(&widths, &build_schedule(widths.len())).map_err(|e| CliError::Usage(e.to_string()))?;
    emit_json(&report, None)
}

fn cmd_gen(rows: usize, cols: usize, seed: u64, out: Option<&Path>, mfeat_dir: Option<&Path>) -> Result<(), CliError> {
    if rows < 2 || cols == 0 {
        return Err(CliError::Usage("need at least 2 rows and 1 column".into()));
    }
    if let Some(dir) = mfeat_dir {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        for p in ingest::write_mfeat_layout(dir, rows, seed)? {
            println!("{}", p.display());
        }
        return Ok(());
    }
    let path = out.expect("clap requires --out without --mfeat-dir");
    let m = ingest::synthetic_matrix(rows, cols, seed);
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    match TableFormat::from_path(path) {
        TableFormat::Whitespace => ingest::write_whitespace(&m, &mut w),
        TableFormat::Csv => (0..m.rows()).try_for_each(|r| {
            let line: Vec<String> = m.row(r).iter().map(|v| format!("{v:?}")).collect();
            writeln!(w, "{}", line.join(","))
        }),
    }
    .and_then(|()| w.flush())
    .map_err(io_err(path))
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Schedule { sites, json } => cmd_schedule(sites as usize, json),
        Command::Run { data, mode, transport, out, dump_matrix, deadline } => cmd_run(
            &data,
            mode,
            transport,
            out.as_deref(),
            dump_matrix.as_deref(),
            Duration::from_millis(deadline.deadline_ms),
        ),
        Command::Compare { data, transport, out, plot, inject_fault, deadline } => cmd_compare(
            &data,
            transport,
            out.as_deref(),
            plot.as_deref(),
            inject_fault,
            Duration::from_millis(deadline.deadline_ms),
        ),
        Command::CostModel { widths, sites, gamma } => cmd_cost_model(widths, sites, gamma),
        Command::Gen { rows, cols, seed, out, mfeat_dir } => {
            cmd_gen(rows, cols, seed, out.as_deref(), mfeat_dir.as_deref())
        }
    }
}

/// Parses arguments, runs the command and maps errors to exit codes.
pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dcm: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
