//! Numeric CSV reading and writing shared by the dataset and graph formats.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// A parsed numeric table. `rows` are data rows only.
#[derive(Debug, Clone)]
pub struct NumericTable {
    pub header: Option<Vec<String>>,
    pub rows: Vec<Vec<f64>>,
}

fn parse_cell(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok()
}

/// Reads a CSV file of numbers. The first record is treated as a header
/// when any of its cells fails to parse as a number and
/// `allow_header` is set. Reported row numbers are 1-based file lines.
pub fn read_numeric_csv(path: &Path, allow_header: bool) -> Result<NumericTable> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(file);
    let mut header = None;
    let mut rows = Vec::new();
    let mut width = None;
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 1;
        let record = record
            .map_err(|e| Error::Input(format!("{}: malformed CSV at line {line}: {e}", path.display())))?;
        if idx == 0 && allow_header && record.iter().any(|c| parse_cell(c).is_none()) {
            header = Some(record.iter().map(|c| c.trim().to_string()).collect::<Vec<_>>());
            width = Some(record.len());
            continue;
        }
        let w = *width.get_or_insert(record.len());
        if record.len() != w {
            return Err(Error::Input(format!(
                "{}: line {line} has {} columns, expected {w}",
                path.display(),
                record.len()
            )));
        }
        let mut row = Vec::with_capacity(w);
        for (col, cell) in record.iter().enumerate() {
            let v = parse_cell(cell).ok_or_else(|| {
                Error::Input(format!(
                    "{}: non-numeric value {cell:?} at line {line}, column {}",
                    path.display(),
                    col + 1
                ))
            })?;
            if !v.is_finite() {
                return Err(Error::Input(format!(
                    "{}: non-finite value {cell:?} at line {line}, column {}",
                    path.display(),
                    col + 1
                )));
            }
            row.push(v);
        }
        rows.push(row);
    }
    Ok(NumericTable { header, rows })
}

/// Writes rows of displayable values as CSV, one row per line.
pub fn write_csv<T: std::fmt::Display>(
    path: &Path,
    header: Option<&[String]>,
    rows: impl IntoIterator<Item = impl IntoIterator<Item = T>>,
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    if let Some(h) = header {
        writeln!(w, "{}", h.join(",")).map_err(io)?;
    }
    for row in rows {
        let mut first = true;
        for v in row {
            if !first {
                w.write_all(b",").map_err(io)?;
            }
            write!(w, "{v}").map_err(io)?;
            first = false;
        }
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}
