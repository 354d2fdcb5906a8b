//! File formats: matrices as CSV rows or a JSON 2-D array, vectors inline or
//! from a file, sample tables as header-less CSV.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::Serializer;

use crate::error::{Error, Result};

pub fn serialize_matrix<S: Serializer>(
    m: &DMatrix<f64>,
    serializer: S,
) -> std::result::Result<S::Ok, S::Error> {
    use serde::Serialize;
    matrix_rows(m).serialize(serializer)
}

pub fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

fn rows_to_matrix(rows: Vec<Vec<f64>>) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if n == 0 {
        return Err(Error::Parse("matrix has no rows".into()));
    }
    let c = rows[0].len();
    if let Some(bad) = rows.iter().find(|r| r.len() != c) {
        return Err(Error::DimensionMismatch {
            expected: c,
            actual: bad.len(),
        });
    }
    Ok(DMatrix::from_fn(n, c, |i, j| rows[i][j]))
}

/// Parses a CSV table of floats (comma separated, optional header line).
pub fn parse_csv_rows(text: &str, header: bool) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(header)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let row = record
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|e| Error::Parse(format!("{f:?}: {e}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

/// Parses a matrix from CSV text or a JSON 2-D array, chosen by the first non-blank character.
pub fn parse_matrix(text: &str, header: bool) -> Result<DMatrix<f64>> {
    if text.trim_start().starts_with('[') {
        let rows: Vec<Vec<f64>> = serde_json::from_str(text)?;
        rows_to_matrix(rows)
    } else {
        rows_to_matrix(parse_csv_rows(text, header)?)
    }
}

pub fn read_matrix(path: &Path, header: bool) -> Result<DMatrix<f64>> {
    let text =
        fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_matrix(&text, header)
}

/// Parses `"1,2,3"`; if the argument is not a number list it is read as a file
/// holding one (comma or newline separated, or a JSON array).
pub fn parse_vector(arg: &str) -> Result<Vec<f64>> {
    let inline: std::result::Result<Vec<f64>, _> =
        arg.split(',').map(|s| s.trim().parse::<f64>()).collect();
    if let Ok(v) = inline {
        return Ok(v);
    }
    let text = fs::read_to_string(arg).map_err(|e| {
        Error::Parse(format!(
            "{arg:?} is neither a number list nor a readable file: {e}"
        ))
    })?;
    if text.trim_start().starts_with('[') {
        return Ok(serde_json::from_str(&text)?);
    }
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|e| Error::Parse(format!("{s:?}: {e}")))
        })
        .collect()
}

/// Writes rows as CSV, full round-trip precision.
pub fn write_csv_rows<'a, I>(path: &Path, k: usize, rows: I) -> Result<()>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)?;
    let mut buf = Vec::with_capacity(k);
    for row in rows {
        buf.clear();
        buf.extend(row.iter().map(|v| format!("{v:e}")));
        writer.write_record(&buf)?;
    }
    writer.flush()?;
    Ok(())
}
