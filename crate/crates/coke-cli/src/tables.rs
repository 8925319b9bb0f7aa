//! Numeric CSV reading and writing.
//!
//! Comma-separated, one header row, `.` decimal point, no quoting or locale
//! handling. Doubles are written in Rust's shortest round-trip decimal form,
//! so writing and re-reading a table reproduces every value bit for bit.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::errors::{CliError, CliResult};
use coke::{LabeledDataset, UnlabeledDataset};

pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

pub fn read_table(path: &Path) -> CliResult<Table> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines().enumerate();
    let Some((_, header_line)) = lines.next() else {
        return Err(CliError::input(format!("{}: empty file", path.display())));
    };
    let header: Vec<String> = header_line.split(',').map(|s| s.trim().to_string()).collect();
    let mut rows = Vec::new();
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|cell| cell.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| {
                CliError::input(format!(
                    "{}:{}: non-numeric cell in '{line}'",
                    path.display(),
                    lineno + 1
                ))
            })?;
        if row.len() != header.len() {
            return Err(CliError::input(format!(
                "{}:{}: expected {} columns, got {}",
                path.display(),
                lineno + 1,
                header.len(),
                row.len()
            )));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::input(format!("{}: no data rows", path.display())));
    }
    Ok(Table { header, rows })
}

/// Checks that the header starts with `z1..zp` and returns `p` along with
/// the positions of optional trailing `a` and `y` columns.
fn covariate_prefix(header: &[String], path: &Path) -> CliResult<usize> {
    let mut p = 0;
    for name in header {
        if *name == format!("z{}", p + 1) {
            p += 1;
        } else {
            break;
        }
    }
    if p == 0 {
        return Err(CliError::input(format!(
            "{}: header must start with covariate columns z1..zp, got '{}'",
            path.display(),
            header.join(",")
        )));
    }
    Ok(p)
}

/// A covariates-only file with header `z1..zp`. Files that also carry `a`
/// and `y` columns are accepted and reduced to their covariates.
pub fn read_unlabeled(path: &Path) -> CliResult<UnlabeledDataset> {
    let table = read_table(path)?;
    let p = covariate_prefix(&table.header, path)?;
    let rest: Vec<&str> = table.header[p..].iter().map(|s| s.as_str()).collect();
    if !(rest.is_empty() || rest == ["a", "y"]) {
        return Err(CliError::input(format!(
            "{}: expected header z1..z{p} or z1..z{p},a,y, got '{}'",
            path.display(),
            table.header.join(",")
        )));
    }
    let z = DMatrix::from_fn(table.rows.len(), p, |i, j| table.rows[i][j]);
    Ok(UnlabeledDataset::new(z)?)
}

/// A labeled file with header `z1..zp,a,y`.
pub fn read_labeled(path: &Path) -> CliResult<LabeledDataset> {
    let table = read_table(path)?;
    let p = covariate_prefix(&table.header, path)?;
    let rest: Vec<&str> = table.header[p..].iter().map(|s| s.as_str()).collect();
    if rest != ["a", "y"] {
        return Err(CliError::input(format!(
            "{}: expected header z1..z{p},a,y, got '{}'",
            path.display(),
            table.header.join(",")
        )));
    }
    let z = DMatrix::from_fn(table.rows.len(), p, |i, j| table.rows[i][j]);
    let a: Vec<u8> = table
        .rows
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let v = row[p];
            if v == 0.0 {
                Ok(0u8)
            } else if v == 1.0 {
                Ok(1u8)
            } else {
                Err(CliError::input(format!(
                    "{}: row {}: treatment must be 0 or 1, got {v}",
                    path.display(),
                    i + 2
                )))
            }
        })
        .collect::<CliResult<_>>()?;
    let y = DVector::from_fn(table.rows.len(), |i, _| table.rows[i][p + 1]);
    Ok(LabeledDataset::new(z, a, y)?)
}

pub fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

/// Joins cells and rows into CSV text with a trailing newline.
pub fn csv_text(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    std::fs::write(path, contents)
        .map_err(|e| CliError::input(format!("cannot write {}: {e}", path.display())))
}
