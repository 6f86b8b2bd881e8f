//! Headerless comma-separated matrices.
//!
//! Values are written with Rust's shortest round-trip formatting, so a
//! matrix read back from its own output is bit-identical.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{KblError, Result};

fn csv_error(line: u64, message: impl Into<String>) -> KblError {
    KblError::Csv { line, message: message.into() }
}

// The reader's line counter ignores blank lines, and a record's offset sits
// right after the previous terminator, before any blank lines.
fn line_of(text: &str, pos: &csv::Position) -> u64 {
    let bytes = text.as_bytes();
    let mut end = (pos.byte() as usize).min(bytes.len());
    while end < bytes.len() && (bytes[end] == b'\n' || bytes[end] == b'\r') {
        end += 1;
    }
    1 + bytes[..end].iter().filter(|&&b| b == b'\n').count() as u64
}

/// Parses a headerless numeric CSV. Blank lines are skipped; every row must
/// have the same number of fields.
pub fn parse_matrix_csv(text: &str) -> Result<DMatrix<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(e.position().map_or(0, |p| line_of(text, p)), e.to_string()))?;
        let line = record.position().map_or(0, |p| line_of(text, p));
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let row = record
            .iter()
            .enumerate()
            .map(|(col, field)| {
                let v: f64 = field
                    .parse()
                    .map_err(|_| csv_error(line, format!("column {}: cannot parse {field:?} as a number", col + 1)))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(csv_error(line, format!("column {}: value is not finite", col + 1)))
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(csv_error(line, format!("expected {w} fields, found {}", row.len())));
            }
            _ => {}
        }
        rows.push(row);
    }
    let ncols = width.ok_or_else(|| csv_error(1, "no data rows"))?;
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let mut text = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|e| KblError::Config(format!("{}: {e}", path.display())))?;
    parse_matrix_csv(&text).map_err(|e| match e {
        KblError::Csv { line, message } => KblError::Csv { line, message: format!("{}: {message}", path.display()) },
        other => other,
    })
}

/// Reads a 0/1 mask.
pub fn read_mask_csv(path: &Path) -> Result<DMatrix<f64>> {
    let m = read_matrix_csv(path)?;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let v = m[(i, j)];
            if v != 0.0 && v != 1.0 {
                return Err(csv_error(
                    i as u64 + 1,
                    format!("{}: column {}: mask entries must be 0 or 1, found {v}", path.display(), j + 1),
                ));
            }
        }
    }
    Ok(m)
}

pub fn format_matrix_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&m[(i, j)].to_string());
        }
        out.push('\n');
    }
    out
}

pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut f = File::create(path)?;
    f.write_all(format_matrix_csv(m).as_bytes())?;
    Ok(())
}

/// Writes rows of named columns with a header line (for curves and paths).
pub fn write_table_csv(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let fields: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let m = DMatrix::from_row_slice(2, 3, &[0.1, -1e-300, 3.0, 1.0 / 3.0, 2e10, -0.0]);
        let back = parse_matrix_csv(&format_matrix_csv(&m)).unwrap();
        for (a, b) in m.iter().zip(back.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn errors_carry_line_numbers() {
        match parse_matrix_csv("1,2\n3,x\n") {
            Err(KblError::Csv { line, message }) => {
                assert_eq!(line, 2);
                assert!(message.contains("column 2"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
        match parse_matrix_csv("1,2\n\n3\n") {
            Err(KblError::Csv { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_matrix_csv("").is_err());
    }
}
