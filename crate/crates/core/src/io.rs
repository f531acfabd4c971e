//! Plain CSV matrix I/O. Values are written with Rust's shortest round-trip
//! float formatting, so a write/read cycle is lossless.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Result, SscError};

pub fn write_matrix_csv(path: impl AsRef<Path>, m: &DMatrix<f64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_matrix(&mut w, m)?;
    w.flush()?;
    Ok(())
}

pub fn write_matrix<W: Write>(w: &mut W, m: &DMatrix<f64>) -> Result<()> {
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| m[(i, j)].to_string()).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

/// Reads a headerless numeric CSV into a matrix with the file's row layout.
pub fn read_matrix_csv(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let text = std::fs::read_to_string(path)?;
    parse_matrix(&text)
}

pub fn parse_matrix(text: &str) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .enumerate()
            .map(|(j, cell)| {
                cell.trim().parse::<f64>().map_err(|_| SscError::Ingestion {
                    row: i + 1,
                    col: j + 1,
                    detail: format!("cannot parse {:?} as a number", cell.trim()),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(SscError::Ingestion {
                    row: i + 1,
                    col: row.len().min(first.len()) + 1,
                    detail: format!("expected {} columns, found {}", first.len(), row.len()),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(SscError::EmptyInput("matrix CSV has no rows".into()));
    }
    let ncols = rows[0].len();
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

pub fn write_vector_csv<T: ToString>(path: impl AsRef<Path>, header: &str, values: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{header}")?;
    for v in values {
        writeln!(w, "{}", v.to_string())?;
    }
    w.flush()?;
    Ok(())
}

/// Reads integer labels, one per line, skipping a non-numeric first line.
pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<i64>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let cell = line.trim();
        if cell.is_empty() {
            continue;
        }
        // Take the last column so both `label` files and `index,label` files work.
        let cell = cell.rsplit(',').next().unwrap_or(cell).trim();
        match cell.parse::<f64>() {
            Ok(v) if v.fract() == 0.0 => out.push(v as i64),
            _ if i == 0 => continue,
            _ => {
                return Err(SscError::Ingestion {
                    row: i + 1,
                    col: 1,
                    detail: format!("cannot parse {cell:?} as an integer label"),
                })
            }
        }
    }
    Ok(out)
}
