//! Delimited matrix files.
//!
//! Layout: an optional `# sifa-matrix v1` schema line, an optional row of
//! column names, then one row per sample. Files ending in `.tsv` or `.tab`
//! are tab-separated, everything else comma-separated. Values are written in
//! shortest round-trip form, so parse(write(m)) == m exactly.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{CliError, CliResult};

pub const MATRIX_SCHEMA: &str = "# sifa-matrix v1";

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixFile {
    pub values: DMatrix<f64>,
    pub header: Option<Vec<String>>,
}

pub fn delimiter_for(path: &Path) -> u8 {
    match path.extension().and_then(|e| e.to_str()) {
        Some("tsv") | Some("tab") => b'\t',
        _ => b',',
    }
}

/// Writes `bytes` to a temporary file in the target directory, then renames it.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

pub fn format_value(x: f64) -> String {
    let a = x.abs();
    if a == 0.0 || (1e-4..1e15).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

pub fn serialize_matrix(m: &DMatrix<f64>, header: Option<&[String]>, delimiter: u8) -> String {
    let sep = delimiter as char;
    let mut out = String::with_capacity(m.nrows() * m.ncols() * 12);
    out.push_str(MATRIX_SCHEMA);
    out.push('\n');
    if let Some(h) = header {
        out.push_str(&h.join(&sep.to_string()));
        out.push('\n');
    }
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if j > 0 {
                out.push(sep);
            }
            let _ = write!(out, "{}", format_value(m[(i, j)]));
        }
        out.push('\n');
    }
    out
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>, header: Option<&[String]>) -> CliResult<()> {
    write_atomic(path, serialize_matrix(m, header, delimiter_for(path)).as_bytes())
}

pub fn parse_matrix(text: &str, delimiter: u8, origin: &str) -> CliResult<MatrixFile> {
    if let Some(first) = text.lines().next() {
        let t = first.trim();
        if let Some(version) = t.strip_prefix("# sifa-matrix") {
            if version.trim() != "v1" {
                return Err(CliError::invalid(format!(
                    "{origin}: unsupported matrix schema '{t}'"
                )));
            }
        }
    }
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut header = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::invalid(format!("{origin}: {e}")))?;
        let parsed: Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(values) => {
                if let Some(col) = values.iter().position(|v| !v.is_finite()) {
                    return Err(CliError::invalid(format!(
                        "{origin}: non-finite value in data row {}, column {}",
                        rows.len() + 1,
                        col + 1
                    )));
                }
                rows.push(values);
            }
            Err(_) if line == 0 => header = Some(record.iter().map(String::from).collect()),
            Err(e) => {
                return Err(CliError::invalid(format!(
                    "{origin}: data row {}: {e}",
                    rows.len() + 1
                )))
            }
        }
    }
    let ncols = rows
        .first()
        .map(Vec::len)
        .or_else(|| header.as_ref().map(Vec::len))
        .unwrap_or(0);
    if let Some(h) = &header {
        if h.len() != ncols {
            return Err(CliError::invalid(format!(
                "{origin}: header has {} names for {ncols} columns",
                h.len()
            )));
        }
    }
    let values = DMatrix::from_row_iterator(rows.len(), ncols, rows.into_iter().flatten());
    Ok(MatrixFile { values, header })
}

pub fn read_matrix(path: &Path) -> CliResult<MatrixFile> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_matrix(&text, delimiter_for(path), &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, -0.1, 1e-300, 1.2345678901234567, 2.5e17, 0.0]);
        let names = vec!["a".to_string(), "b".into(), "c".into()];
        for &d in b",\t" {
            let text = serialize_matrix(&m, Some(&names), d);
            let back = parse_matrix(&text, d, "test").unwrap();
            assert_eq!(back.values, m);
            assert_eq!(back.header.as_deref(), Some(names.as_slice()));
        }
    }

    #[test]
    fn headerless_and_ragged() {
        let m = parse_matrix("1,2\n3,4\n", b',', "t").unwrap();
        assert_eq!(m.values, DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]));
        assert!(m.header.is_none());
        assert!(parse_matrix("1,2\n3\n", b',', "t").is_err());
        assert!(parse_matrix("1,2\nx,4\n", b',', "t").is_err());
        assert!(parse_matrix("1,nan\n", b',', "t").is_err());
        assert!(parse_matrix("# sifa-matrix v2\n1\n", b',', "t").is_err());
    }
}
