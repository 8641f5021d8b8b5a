//! CSV ingestion and export.
//!
//! Files need a header row. In a per-population file the optional column
//! `y` holds outcomes and every other column is a covariate. A combined file
//! additionally carries `s` (1 = source, 0 = target). Empty cells are
//! missing values. Numbers use `.` as the decimal separator.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::data::{DesignKind, Table, TransportDataset};
use crate::error::Result;

pub const OUTCOME_COLUMN: &str = "y";
pub const MEMBERSHIP_COLUMN: &str = "s";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("row {row}, column `{column}`: cannot parse `{value}` as a number")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}: membership `s` must be 0 or 1, got `{value}`")]
    Membership { row: usize, value: String },
    #[error("missing required column `{0}`")]
    MissingColumn(&'static str),
    #[error("column `s` is only allowed in a combined file")]
    UnexpectedMembership,
    #[error("duplicate column `{0}`")]
    DuplicateColumn(String),
}

fn parse_cell(raw: &str, row: usize, column: &str) -> Result<Option<f64>, IoError> {
    let raw = raw.trim();
    if raw.is_empty() {
        return Ok(None);
    }
    raw.parse::<f64>().map(Some).map_err(|_| IoError::Parse {
        row,
        column: column.to_string(),
        value: raw.to_string(),
    })
}

struct RawCsv {
    header: Vec<String>,
    records: Vec<csv::StringRecord>,
}

fn read_raw(reader: impl Read) -> Result<RawCsv, IoError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    for (i, h) in header.iter().enumerate() {
        if header[..i].contains(h) {
            return Err(IoError::DuplicateColumn(h.clone()));
        }
    }
    let records = rdr.records().collect::<Result<Vec<_>, _>>()?;
    Ok(RawCsv { header, records })
}

fn open(path: &Path) -> Result<std::fs::File, IoError> {
    std::fs::File::open(path).map_err(|source| IoError::File {
        path: path.display().to_string(),
        source,
    })
}

/// Reads one population's table.
pub fn read_table_from(reader: impl Read) -> Result<Table, IoError> {
    let raw = read_raw(reader)?;
    if raw.header.iter().any(|h| h == MEMBERSHIP_COLUMN) {
        return Err(IoError::UnexpectedMembership);
    }
    let y_col = raw.header.iter().position(|h| h == OUTCOME_COLUMN);
    let cov_cols: Vec<usize> = (0..raw.header.len()).filter(|&j| Some(j) != y_col).collect();
    let mut table = Table {
        covariate_names: cov_cols.iter().map(|&j| raw.header[j].clone()).collect(),
        covariates: Vec::with_capacity(raw.records.len()),
        outcome: y_col.map(|_| Vec::with_capacity(raw.records.len())),
    };
    for (row, rec) in raw.records.iter().enumerate() {
        let cells = cov_cols
            .iter()
            .map(|&j| parse_cell(rec.get(j).unwrap_or(""), row, &raw.header[j]))
            .collect::<Result<Vec<_>, _>>()?;
        table.covariates.push(cells);
        if let (Some(j), Some(y)) = (y_col, table.outcome.as_mut()) {
            y.push(parse_cell(rec.get(j).unwrap_or(""), row, OUTCOME_COLUMN)?);
        }
    }
    Ok(table)
}

pub fn read_table(path: &Path) -> Result<Table> {
    Ok(read_table_from(open(path)?)?)
}

/// Reads a combined file with `y` and `s` columns.
pub fn read_combined_from(reader: impl Read, design: DesignKind) -> Result<TransportDataset> {
    let raw = read_raw(reader)?;
    let y_col = raw
        .header
        .iter()
        .position(|h| h == OUTCOME_COLUMN)
        .ok_or(IoError::MissingColumn(OUTCOME_COLUMN))?;
    let s_col = raw
        .header
        .iter()
        .position(|h| h == MEMBERSHIP_COLUMN)
        .ok_or(IoError::MissingColumn(MEMBERSHIP_COLUMN))?;
    let cov_cols: Vec<usize> = (0..raw.header.len()).filter(|&j| j != y_col && j != s_col).collect();
    let names: Vec<String> = cov_cols.iter().map(|&j| raw.header[j].clone()).collect();
    let n = raw.records.len();
    let mut x = DMatrix::zeros(n, cov_cols.len());
    let mut y = Vec::with_capacity(n);
    let mut s = Vec::with_capacity(n);
    for (row, rec) in raw.records.iter().enumerate() {
        for (k, &j) in cov_cols.iter().enumerate() {
            x[(row, k)] = parse_cell(rec.get(j).unwrap_or(""), row, &raw.header[j])?.ok_or_else(|| {
                crate::data::DataError::MissingCovariate {
                    population: "combined",
                    row,
                    column: raw.header[j].clone(),
                }
            })?;
        }
        y.push(parse_cell(rec.get(y_col).unwrap_or(""), row, OUTCOME_COLUMN)?);
        s.push(match rec.get(s_col).map(str::trim) {
            Some("1") => true,
            Some("0") => false,
            other => {
                return Err(IoError::Membership {
                    row,
                    value: other.unwrap_or("").to_string(),
                }
                .into())
            }
        });
    }
    Ok(TransportDataset::new(names, x, y, s, design)?)
}

pub fn read_combined(path: &Path, design: DesignKind) -> Result<TransportDataset> {
    read_combined_from(open(path)?, design)
}

/// Writes a dataset in combined format. Values use the shortest decimal
/// representation that parses back to the same `f64`.
pub fn write_combined_to(ds: &TransportDataset, writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = ds.covariate_names().iter().map(String::as_str).collect();
    header.extend([OUTCOME_COLUMN, MEMBERSHIP_COLUMN]);
    w.write_record(&header).map_err(IoError::from)?;
    for i in 0..ds.nrows() {
        let mut rec: Vec<String> = (0..ds.ncols()).map(|j| ds.value(i, j).to_string()).collect();
        rec.push(ds.outcome(i).map(|v| v.to_string()).unwrap_or_default());
        rec.push(if ds.is_source(i) { "1" } else { "0" }.into());
        w.write_record(&rec).map_err(IoError::from)?;
    }
    w.flush().map_err(|source| IoError::File {
        path: "<csv output>".into(),
        source,
    })?;
    Ok(())
}

pub fn write_combined(ds: &TransportDataset, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|source| IoError::File {
        path: path.display().to_string(),
        source,
    })?;
    write_combined_to(ds, file)
}
