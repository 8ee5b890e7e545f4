//! CSV and JSON file formats.
//!
//! Every CSV starts with a `#` comment naming the artifact version, config
//! hash and seed, followed by a single header row. Floats are written in
//! shortest round-trip form, so reading a file back yields identical bits.

use std::fs;
use std::path::Path;

use empdyn_core::dataset::{EvalGrid, Interval, Row, SparseDataset};
use empdyn_core::Error as CoreError;
use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const ARTIFACT: &str = env!("CARGO_PKG_NAME");
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

const DATA_HEADER: [&str; 3] = ["subject_id", "time", "value"];

/// Provenance stamped on every output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Meta {
    pub artifact: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
}

impl Meta {
    pub fn new(config_hash: String, seed: u64) -> Self {
        Self {
            artifact: ARTIFACT.to_string(),
            version: VERSION.to_string(),
            config_hash,
            seed,
        }
    }

    fn comment(&self) -> String {
        format!(
            "# {} {} config={} seed={}\n",
            self.artifact, self.version, self.config_hash, self.seed
        )
    }
}

pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

/// Reads `subject_id,time,value` rows. A header row is optional, `#` lines
/// are comments. Returns the dataset and the number of rows dropped by
/// `domain_override`.
pub fn load_csv(path: &Path, domain_override: Option<Interval>) -> CliResult<(SparseDataset, usize)> {
    let text = fs::read(path).map_err(|e| CliError::io(path, e))?;
    let data_err = |e: CoreError| CliError::parse(path, e.to_string());
    let rows = parse_rows(&text).map_err(data_err)?;
    SparseDataset::from_rows(rows, domain_override).map_err(data_err)
}

fn parse_rows(text: &[u8]) -> Result<Vec<Row>, CoreError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text);
    let mut rows = Vec::new();
    let mut first = true;
    for record in reader.records() {
        let record = record.map_err(|e| CoreError::MalformedRow {
            line: e.position().map_or(0, |p| p.line() as usize),
            reason: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if std::mem::take(&mut first) && record.iter().eq(DATA_HEADER) {
            continue;
        }
        let malformed = |reason: String| CoreError::MalformedRow { line, reason };
        if record.len() != 3 {
            return Err(malformed(format!("expected 3 fields, found {}", record.len())));
        }
        let number = |i: usize, name: &str| {
            record[i]
                .parse::<f64>()
                .map_err(|_| malformed(format!("{name} `{}` is not a number", &record[i])))
        };
        rows.push(Row {
            line,
            subject: record[0].to_string(),
            time: number(1, "time")?,
            value: number(2, "value")?,
        });
    }
    Ok(rows)
}

fn write_bytes(path: &Path, bytes: &[u8]) -> CliResult<()> {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

/// Writes a header comment, a header row and one row per record.
pub fn write_table<I, R>(path: &Path, meta: &Meta, header: &[String], rows: I) -> CliResult<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut out = meta.comment().into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut out);
        let csv_err = |e: csv::Error| CliError::parse(path, e.to_string());
        w.write_record(header).map_err(csv_err)?;
        for row in rows {
            w.write_record(row.into_iter().collect::<Vec<_>>())
                .map_err(csv_err)?;
        }
        w.flush().map_err(|e| CliError::io(path, e))?;
    }
    write_bytes(path, &out)
}

pub fn write_dataset(path: &Path, meta: &Meta, data: &SparseDataset) -> CliResult<()> {
    let header: Vec<String> = DATA_HEADER.iter().map(|s| s.to_string()).collect();
    let rows = data.subjects().iter().flat_map(|s| {
        s.times
            .iter()
            .zip(&s.values)
            .map(|(&t, &v)| vec![s.id.clone(), fmt_f64(t), fmt_f64(v)])
    });
    write_table(path, meta, &header, rows)
}

/// Named grid functions as columns, led by `t`.
pub fn write_columns(
    path: &Path,
    meta: &Meta,
    grid: &EvalGrid,
    columns: &[(String, &[f64])],
) -> CliResult<()> {
    let header: Vec<String> = std::iter::once("t".to_string())
        .chain(columns.iter().map(|(name, _)| name.clone()))
        .collect();
    let rows = grid.points().iter().enumerate().map(|(i, &t)| {
        std::iter::once(fmt_f64(t))
            .chain(columns.iter().map(move |(_, c)| fmt_f64(c[i])))
            .collect::<Vec<_>>()
    });
    write_table(path, meta, &header, rows)
}

/// Square grid surface: header `t,s0,…`, each row led by its `t`.
pub fn write_matrix(path: &Path, meta: &Meta, grid: &EvalGrid, m: &DMatrix<f64>) -> CliResult<()> {
    let header: Vec<String> = std::iter::once("t".to_string())
        .chain((0..m.ncols()).map(|j| format!("s{j}")))
        .collect();
    let rows = grid.points().iter().enumerate().map(|(i, &t)| {
        std::iter::once(fmt_f64(t))
            .chain((0..m.ncols()).map(move |j| fmt_f64(m[(i, j)])))
            .collect::<Vec<_>>()
    });
    write_table(path, meta, &header, rows)
}

/// Numeric table with a header row; returns column names and columns.
pub fn read_columns(path: &Path) -> CliResult<(Vec<String>, Vec<Vec<f64>>)> {
    let text = fs::read(path).map_err(|e| CliError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_slice());
    let bad = |e: csv::Error| CliError::parse(path, e.to_string());
    let header: Vec<String> = reader.headers().map_err(bad)?.iter().map(String::from).collect();
    let mut columns = vec![Vec::new(); header.len()];
    for record in reader.records() {
        let record = record.map_err(bad)?;
        for (col, field) in columns.iter_mut().zip(record.iter()) {
            let x = field
                .parse::<f64>()
                .map_err(|_| CliError::parse(path, format!("`{field}` is not a number")))?;
            col.push(x);
        }
    }
    Ok((header, columns))
}

/// Reads a [`write_matrix`] file; the `t` column must match `grid`.
pub fn read_matrix(path: &Path, grid: &EvalGrid) -> CliResult<DMatrix<f64>> {
    let (_, columns) = read_columns(path)?;
    let m = grid.len();
    if columns.len() != m + 1 || columns[0] != grid.points() {
        return Err(CliError::parse(path, format!("expected a {m}×{m} surface on the fitted grid")));
    }
    Ok(DMatrix::from_fn(m, m, |i, j| columns[j + 1][i]))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("output serializes");
    bytes.push(b'\n');
    write_bytes(path, &bytes)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_slice(&text).map_err(|e| CliError::parse(path, e.to_string()))
}

/// File-name-safe form of a subject id. Characters outside
/// `[A-Za-z0-9._-]` become `_`; an empty or dot-only result gets a prefix.
pub fn sanitize_id(id: &str) -> String {
    let s: String = id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') {
                c
            } else {
                '_'
            }
        })
        .collect();
    if s.chars().all(|c| c == '.') {
        format!("_{s}")
    } else {
        s
    }
}
