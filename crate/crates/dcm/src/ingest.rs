//! Loading tables, joining them column-wise, and splitting them into
//! per-site column blocks.

use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use dcm_core::{ColumnBlock, CovarianceError, DenseMatrix, MatrixError};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: expected {expected} fields, found {found}")]
    RaggedRows { line: usize, expected: usize, found: usize },
    #[error("line {line}: cannot parse {field:?} as a number")]
    Parse { line: usize, field: String },
    #[error("line {line}: non-finite value {field:?}")]
    NonFiniteValue { line: usize, field: String },
    #[error("tables have different row counts ({0} vs {1})")]
    RowCountMismatch(usize, usize),
    #[error("partition spec does not match the data: {0}")]
    SpecMismatch(String),
    #[error("invalid partition spec: {0}")]
    InvalidSpec(String),
    #[error("unsupported partition count {0} (Mfeat presets cover 2 to 6)")]
    UnsupportedPartitionCount(usize),
    #[error("file contains no data rows")]
    Empty,
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Block(#[from] CovarianceError),
    #[error("malformed partition spec JSON: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum TableFormat {
    Csv,
    /// Numbers separated by runs of spaces or tabs (Mfeat's native layout).
    Whitespace,
}

impl TableFormat {
    /// `.csv` files are CSV, everything else is whitespace-delimited.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => Self::Csv,
            _ => Self::Whitespace,
        }
    }
}

fn parse_field(field: &str, line: usize) -> Result<f64, IngestError> {
    let v: f64 = field.trim().parse().map_err(|_| IngestError::Parse { line, field: field.to_string() })?;
    if !v.is_finite() {
        return Err(IngestError::NonFiniteValue { line, field: field.to_string() });
    }
    Ok(v)
}

fn push_row(values: &mut Vec<f64>, width: &mut Option<usize>, fields: &[&str], line: usize) -> Result<(), IngestError> {
    let expected = *width.get_or_insert(fields.len());
    if fields.len() != expected {
        return Err(IngestError::RaggedRows { line, expected, found: fields.len() });
    }
    for f in fields {
        values.push(parse_field(f, line)?);
    }
    Ok(())
}

pub fn load_table(path: &Path, format: TableFormat) -> Result<DenseMatrix, IngestError> {
    let io_err = |source| IngestError::Io { path: path.to_path_buf(), source };
    let file = File::open(path).map_err(io_err)?;
    match format {
        TableFormat::Whitespace => read_whitespace(BufReader::new(file)).map_err(|e| match e {
            IngestError::Io { source, .. } => io_err(source),
            other => other,
        }),
        TableFormat::Csv => read_csv(file),
    }
}

pub fn read_whitespace<R: BufRead>(reader: R) -> Result<DenseMatrix, IngestError> {
    let mut values = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| IngestError::Io { path: PathBuf::new(), source })?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        push_row(&mut values, &mut width, &fields, i + 1)?;
        rows += 1;
    }
    let cols = width.ok_or(IngestError::Empty)?;
    Ok(DenseMatrix::new(rows, cols, values, None)?)
}

/// Reads comma-separated numbers. A first record that does not parse as
/// numbers is taken as the column labels.
pub fn read_csv<R: io::Read>(reader: R) -> Result<DenseMatrix, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(reader);
    let mut values = Vec::new();
    let mut width = None;
    let mut labels = None;
    let mut rows = 0;
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| IngestError::Parse { line: i + 1, field: e.to_string() })?;
        let fields: Vec<&str> = record.iter().collect();
        if fields.iter().all(|f| f.is_empty()) {
            continue;
        }
        let numeric = fields.iter().all(|f| f.parse::<f64>().is_ok());
        if i == 0 && !numeric {
            width = Some(fields.len());
            labels = Some(fields.iter().map(|f| f.to_string()).collect());
            continue;
        }
        push_row(&mut values, &mut width, &fields, i + 1)?;
        rows += 1;
    }
    let cols = width.ok_or(IngestError::Empty)?;
    Ok(DenseMatrix::new(rows, cols, values, labels)?)
}

/// Writes a matrix in the whitespace format, one row per line, using the
/// shortest representation that reads back to the same `f64`.
pub fn write_whitespace<W: Write>(m: &DenseMatrix, mut out: W) -> io::Result<()> {
    for r in 0..m.rows() {
        let line: Vec<String> = m.row(r).iter().map(|v| format!("{v:?}")).collect();
        writeln!(out, "{}", line.join("  "))?;
    }
    Ok(())
}

/// Concatenates tables column-wise, in order. Labels survive only when every
/// table has them and the combined set stays unique.
pub fn hjoin(tables: &[DenseMatrix]) -> Result<DenseMatrix, IngestError> {
    let Some(first) = tables.first() else {
        return Err(IngestError::Empty);
    };
    let rows = first.rows();
    if let Some(t) = tables.iter().find(|t| t.rows() != rows) {
        return Err(IngestError::RowCountMismatch(rows, t.rows()));
    }
    let cols: usize = tables.iter().map(DenseMatrix::cols).sum();
    let mut values = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for t in tables {
            values.extend_from_slice(t.row(r));
        }
    }
    let labels: Option<Vec<String>> =
        tables.iter().map(|t| t.labels().map(<[String]>::to_vec)).collect::<Option<Vec<_>>>().map(|ls| ls.concat());
    let joined = DenseMatrix::new(rows, cols, values, None)?;
    Ok(joined.clone().with_labels(labels).unwrap_or(joined))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionGroup {
    pub site: usize,
    pub cols: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

/// Assignment of global columns to sites.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionSpec {
    pub total_cols: usize,
    pub groups: Vec<PartitionGroup>,
}

impl PartitionSpec {
    /// Contiguous groups of the given widths, in order.
    pub fn from_widths(widths: &[usize], names: Option<&[&str]>) -> Self {
        let mut start = 0;
        let groups = widths
            .iter()
            .enumerate()
            .map(|(site, &w)| {
                let cols = (start..start + w).collect();
                start += w;
                PartitionGroup { site, cols, name: names.map(|n| n[site].to_string()) }
            })
            .collect();
        Self { total_cols: start, groups }
    }

    /// One site holding every column.
    pub fn single(total_cols: usize) -> Self {
        Self::from_widths(&[total_cols], None)
    }

    /// `sites` contiguous groups whose widths differ by at most one.
    pub fn equal(total_cols: usize, sites: usize) -> Result<Self, IngestError> {
        if sites == 0 || sites > total_cols {
            return Err(IngestError::InvalidSpec(format!("cannot split {total_cols} columns over {sites} sites")));
        }
        let widths: Vec<usize> = (0..sites).map(|i| total_cols / sites + usize::from(i < total_cols % sites)).collect();
        Ok(Self::from_widths(&widths, None))
    }

    pub fn sites(&self) -> usize {
        self.groups.len()
    }

    pub fn widths(&self) -> Vec<usize> {
        self.groups.iter().map(|g| g.cols.len()).collect()
    }

    /// Sites numbered `0..t` in order, every group non-empty, and the groups
    /// partitioning `0..total_cols` exactly.
    pub fn validate(&self) -> Result<(), IngestError> {
        let mut seen = vec![false; self.total_cols];
        for (i, g) in self.groups.iter().enumerate() {
            if g.site != i {
                return Err(IngestError::InvalidSpec(format!("group {i} is labelled site {}", g.site)));
            }
            if g.cols.is_empty() {
                return Err(IngestError::InvalidSpec(format!("site {i} has no columns")));
            }
            for &c in &g.cols {
                if c >= self.total_cols {
                    return Err(IngestError::InvalidSpec(format!("column {c} beyond {}", self.total_cols)));
                }
                if std::mem::replace(&mut seen[c], true) {
                    return Err(IngestError::InvalidSpec(format!("column {c} assigned twice")));
                }
            }
        }
        if let Some(c) = seen.iter().position(|s| !s) {
            return Err(IngestError::InvalidSpec(format!("column {c} not assigned to any site")));
        }
        if self.groups.is_empty() {
            return Err(IngestError::InvalidSpec("no groups".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, IngestError> {
        let spec: Self = serde_json::from_str(s)?;
        spec.validate()?;
        Ok(spec)
    }
}

/// One [`ColumnBlock`] per group; columns within a group are taken in
/// ascending global order.
pub fn partition_vertical(m: &DenseMatrix, spec: &PartitionSpec) -> Result<Vec<ColumnBlock>, IngestError> {
    if spec.total_cols != m.cols() {
        return Err(IngestError::SpecMismatch(format!(
            "spec covers {} columns, data has {}",
            spec.total_cols,
            m.cols()
        )));
    }
    spec.validate().map_err(|e| IngestError::SpecMismatch(e.to_string()))?;
    spec.groups
        .iter()
        .map(|g| {
            let mut cols = g.cols.clone();
            cols.sort_unstable();
            let data = m.column_slice(&cols)?;
            Ok(ColumnBlock::new(g.site, data, cols)?)
        })
        .collect()
}

/// The six Mfeat feature files, in their global column order.
pub const MFEAT_FILES: [(&str, usize); 6] =
    [("fac", 216), ("fou", 76), ("kar", 64), ("mor", 6), ("pix", 240), ("zer", 47)];

pub const MFEAT_ROWS: usize = 2000;

pub fn mfeat_total_cols() -> usize {
    MFEAT_FILES.iter().map(|(_, w)| w).sum()
}

/// Site layouts for 2 to 6 sites; each entry lists how many consecutive
/// files a site holds.
pub fn mfeat_preset(partitions: usize) -> Result<PartitionSpec, IngestError> {
    let (files_per_site, names): (&[usize], &[&str]) = match partitions {
        2 => (&[3, 3], &["Fact-Fou-Kar", "Mor-Pix-Zer"]),
        3 => (&[1, 2, 3], &["Fact", "Fou-Kar", "Mor-Pix-Zer"]),
        4 => (&[1, 2, 2, 1], &["Fact", "Fou-Kar", "Mor-Pix", "Zer"]),
        5 => (&[1, 1, 1, 2, 1], &["Fact", "Fou", "Kar", "Mor-Pix", "Zer"]),
        6 => (&[1; 6], &["Fact", "Fou", "Kar", "Mor", "Pix", "Zer"]),
        n => return Err(IngestError::UnsupportedPartitionCount(n)),
    };
    let mut file = 0;
    let widths: Vec<usize> = files_per_site
        .iter()
        .map(|&k| {
            let w = MFEAT_FILES[file..file + k].iter().map(|(_, w)| w).sum();
            file += k;
            w
        })
        .collect();
    Ok(PartitionSpec::from_widths(&widths, Some(names)))
}

/// Seeded synthetic data: a handful of shared Gaussian factors plus
/// per-column noise and offsets, so columns are correlated across sites.
pub fn synthetic_matrix(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    const FACTORS: usize = 8;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let loadings: Vec<f64> = (0..cols * FACTORS).map(|_| normal.sample(&mut rng) * 0.5).collect();
    let offsets: Vec<f64> = (0..cols).map(|_| normal.sample(&mut rng) * 10.0).collect();
    let mut values = Vec::with_capacity(rows * cols);
    for _ in 0..rows {
        let z: Vec<f64> = (0..FACTORS).map(|_| normal.sample(&mut rng)).collect();
        for c in 0..cols {
            let shared: f64 = z.iter().zip(&loadings[c * FACTORS..(c + 1) * FACTORS]).map(|(a, b)| a * b).sum();
            values.push(offsets[c] + shared + normal.sample(&mut rng));
        }
    }
    DenseMatrix::new(rows, cols, values, None).expect("finite synthetic values")
}

/// Writes a synthetic Mfeat-shaped dataset as six whitespace files named
/// `mfeat-<file>` under `dir`, returning their paths in column order.
pub fn write_mfeat_layout(dir: &Path, rows: usize, seed: u64) -> Result<Vec<PathBuf>, IngestError> {
    let full = synthetic_matrix(rows, mfeat_total_cols(), seed);
    let mut start = 0;
    let mut paths = Vec::new();
    for (name, width) in MFEAT_FILES {
        let cols: Vec<usize> = (start..start + width).collect();
        start += width;
        let path = dir.join(format!("mfeat-{name}"));
        let io_err = |source| IngestError::Io { path: path.clone(), source };
        let file = File::create(&path).map_err(io_err)?;
        write_whitespace(&full.column_slice(&cols)?, io::BufWriter::new(file)).map_err(io_err)?;
        paths.push(path);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn whitespace_parse() {
        let m = read_whitespace("1 2\n  3   4\n\n5\t6\n".as_bytes()).unwrap();
        assert_eq!((m.rows(), m.cols()), (3, 2));
        assert_eq!(m.values(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn whitespace_errors() {
        assert!(matches!(
            read_whitespace("1 2\n3\n".as_bytes()),
            Err(IngestError::RaggedRows { line: 2, expected: 2, found: 1 })
        ));
        assert!(matches!(read_whitespace("1 x\n".as_bytes()), Err(IngestError::Parse { line: 1, .. })));
        assert!(matches!(read_whitespace("1 NaN\n".as_bytes()), Err(IngestError::NonFiniteValue { .. })));
        assert!(matches!(read_whitespace("\n".as_bytes()), Err(IngestError::Empty)));
    }

    #[test]
    fn csv_with_header() {
        let m = read_csv("a,b\n1.5,2\n".as_bytes()).unwrap();
        assert_eq!((m.rows(), m.cols()), (1, 2));
        assert_eq!(m.labels().unwrap(), &["a".to_string(), "b".to_string()]);
        let m = read_csv("1,2\n3,4\n".as_bytes()).unwrap();
        assert!(m.labels().is_none());
        assert!(matches!(read_csv("a,b\n1,2,3\n".as_bytes()), Err(IngestError::RaggedRows { .. })));
        assert!(matches!(read_csv("1,2\n3,z\n".as_bytes()), Err(IngestError::Parse { .. })));
        assert!(matches!(read_csv("a,a\n1,2\n".as_bytes()), Err(IngestError::Matrix(_))));
    }

    #[test]
    fn joins() {
        let a = DenseMatrix::new(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], None).unwrap();
        let b = DenseMatrix::new(3, 1, vec![7.0, 8.0, 9.0], None).unwrap();
        let j = hjoin(&[a.clone(), b]).unwrap();
        assert_eq!(j.values(), &[1.0, 2.0, 7.0, 3.0, 4.0, 8.0, 5.0, 6.0, 9.0]);
        assert!(hjoin(std::slice::from_ref(&a)).unwrap().bit_eq(&a));
        let short = DenseMatrix::new(2, 1, vec![1.0, 2.0], None).unwrap();
        assert!(matches!(hjoin(&[short, a]), Err(IngestError::RowCountMismatch(2, 3))));
    }

    #[test]
    fn mfeat_layouts() {
        assert_eq!(mfeat_total_cols(), 649);
        assert_eq!(mfeat_preset(2).unwrap().widths(), vec![356, 293]);
        assert_eq!(mfeat_preset(3).unwrap().widths(), vec![216, 140, 293]);
        assert_eq!(mfeat_preset(4).unwrap().widths(), vec![216, 140, 246, 47]);
        assert_eq!(mfeat_preset(5).unwrap().widths(), vec![216, 76, 64, 246, 47]);
        assert_eq!(mfeat_preset(6).unwrap().widths(), vec![216, 76, 64, 6, 240, 47]);
        for n in 2..=6 {
            let s = mfeat_preset(n).unwrap();
            s.validate().unwrap();
            assert_eq!(s.total_cols, 649);
            assert_eq!(s.widths().iter().sum::<usize>(), 649);
        }
        assert_eq!(mfeat_preset(3).unwrap().groups[1].name.as_deref(), Some("Fou-Kar"));
        assert!(matches!(mfeat_preset(7), Err(IngestError::UnsupportedPartitionCount(7))));
        assert!(matches!(mfeat_preset(1), Err(IngestError::UnsupportedPartitionCount(1))));
    }

    #[test]
    fn partition_and_rejoin() {
        let m = synthetic_matrix(5, 7, 3);
        let spec = PartitionSpec::from_widths(&[3, 1, 3], None);
        let blocks = partition_vertical(&m, &spec).unwrap();
        assert_eq!(blocks[1].global_cols(), &[3]);
        let data: Vec<DenseMatrix> = blocks.iter().map(|b| b.data().clone()).collect();
        assert!(hjoin(&data).unwrap().bit_eq(&m));

        let single = partition_vertical(&m, &PartitionSpec::single(7)).unwrap();
        assert!(single[0].data().bit_eq(&m));

        let mut missing = spec.clone();
        missing.groups[2].cols.pop();
        assert!(matches!(partition_vertical(&m, &missing), Err(IngestError::SpecMismatch(_))));
        assert!(matches!(partition_vertical(&m, &PartitionSpec::single(6)), Err(IngestError::SpecMismatch(_))));
    }

    #[test]
    fn listed_columns_are_sorted_into_blocks() {
        let m = synthetic_matrix(4, 4, 1);
        let spec = PartitionSpec {
            total_cols: 4,
            groups: vec![
                PartitionGroup { site: 0, cols: vec![3, 0], name: None },
                PartitionGroup { site: 1, cols: vec![1, 2], name: None },
            ],
        };
        let blocks = partition_vertical(&m, &spec).unwrap();
        assert_eq!(blocks[0].global_cols(), &[0, 3]);
        assert_eq!(blocks[0].data().column(1).unwrap(), m.column(3).unwrap());
    }

    #[test]
    fn spec_json() {
        let spec = mfeat_preset(3).unwrap();
        let json = spec.to_json();
        assert!(json.contains("\"total_cols\": 649"));
        assert_eq!(PartitionSpec::from_json(&json).unwrap(), spec);
        let raw =
            r#"{"total_cols": 3, "groups": [{"site": 0, "cols": [0, 1]}, {"site": 1, "cols": [2], "name": "z"}]}"#;
        let parsed = PartitionSpec::from_json(raw).unwrap();
        assert_eq!(parsed.widths(), vec![2, 1]);
        let bad = r#"{"total_cols": 3, "groups": [{"site": 0, "cols": [0, 1]}]}"#;
        assert!(matches!(PartitionSpec::from_json(bad), Err(IngestError::InvalidSpec(_))));
    }

    #[test]
    fn equal_split() {
        assert_eq!(PartitionSpec::equal(10, 3).unwrap().widths(), vec![4, 3, 3]);
        assert!(PartitionSpec::equal(2, 3).is_err());
    }

    #[test]
    fn synthetic_is_seeded() {
        assert!(synthetic_matrix(10, 4, 7).bit_eq(&synthetic_matrix(10, 4, 7)));
        assert!(!synthetic_matrix(10, 4, 7).bit_eq(&synthetic_matrix(10, 4, 8)));
    }

    #[test]
    fn whitespace_roundtrip_is_exact() {
        let m = synthetic_matrix(6, 3, 11);
        let mut buf = Vec::new();
        write_whitespace(&m, &mut buf).unwrap();
        assert!(read_whitespace(buf.as_slice()).unwrap().bit_eq(&m));
    }
}
