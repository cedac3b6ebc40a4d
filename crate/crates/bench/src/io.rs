//! Dense matrix interchange: a CSV whose first line is `rows,cols`, followed by
//! `rows` lines of `cols` values each.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use pgh_core::Vector;

use crate::error::{BenchError, Result};

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let file = File::open(path).map_err(|e| BenchError::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(rec) => rec.map_err(|e| csv_error(path, &e))?,
        None => return Err(BenchError::parse(path, 1, "1", "missing `rows,cols` header")),
    };
    if header.len() != 2 {
        return Err(BenchError::parse(path, 1, "1", "header must be `rows,cols`"));
    }
    let dim = |i: usize| -> Result<usize> {
        header[i]
            .parse::<usize>()
            .map_err(|e| BenchError::parse(path, 1, (i + 1).to_string(), e.to_string()))
    };
    let (rows, cols) = (dim(0)?, dim(1)?);
    if rows == 0 || cols == 0 {
        return Err(BenchError::parse(path, 1, "1", "matrix dimensions must be positive"));
    }
    let mut m = DMatrix::zeros(rows, cols);
    let mut seen = 0;
    for (i, rec) in records.enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| csv_error(path, &e))?;
        if seen == rows {
            return Err(BenchError::parse(path, line, "1", format!("expected {rows} data rows")));
        }
        if rec.len() != cols {
            return Err(BenchError::parse(
                path,
                line,
                (rec.len().min(cols) + 1).to_string(),
                format!("expected {cols} values, found {}", rec.len()),
            ));
        }
        for (j, field) in rec.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| BenchError::parse(path, line, (j + 1).to_string(), format!("not a number: {field:?}")))?;
            if !v.is_finite() {
                return Err(BenchError::parse(
                    path,
                    line,
                    (j + 1).to_string(),
                    "value is not finite",
                ));
            }
            m[(seen, j)] = v;
        }
        seen += 1;
    }
    if seen != rows {
        return Err(BenchError::parse(
            path,
            seen + 2,
            "1",
            format!("expected {rows} data rows, found {seen}"),
        ));
    }
    Ok(m)
}

/// A vector stored as a single column or a single row.
pub fn read_vector(path: &Path) -> Result<Vector> {
    let m = read_matrix(path)?;
    match m.shape() {
        (_, 1) => Ok(m.column(0).into_owned()),
        (1, n) => Ok(Vector::from_iterator(n, m.row(0).iter().cloned())),
        (r, c) => Err(BenchError::parse(
            path,
            1,
            "1",
            format!("expected a vector, found a {r} x {c} matrix"),
        )),
    }
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!("{},{}\n", m.nrows(), m.ncols()));
    for i in 0..m.nrows() {
        let row: Vec<String> = m.row(i).iter().map(|v| v.to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    let mut f = File::create(path).map_err(|e| BenchError::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| BenchError::io(path, e))
}

pub fn write_vector(path: &Path, v: &Vector) -> Result<()> {
    write_matrix(path, &DMatrix::from_column_slice(v.len(), 1, v.as_slice()))
}

fn csv_error(path: &Path, e: &csv::Error) -> BenchError {
    let row = e.position().map_or(0, |p| p.line() as usize);
    BenchError::parse(path, row, "?", e.to_string())
}
