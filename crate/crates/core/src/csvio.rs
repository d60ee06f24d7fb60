//! CSV reading and writing for incomplete matrices.
//!
//! Format: a header row of column names, then one row per observation.
//! Missing cells are read from `NA` or an empty field and always written as
//! `NA`. Numbers use `.` as the decimal point and are written in the
//! shortest form that parses back to the same `f64`.

use std::io::{Read, Write};
use std::path::Path;

use crate::data::{IncompleteMatrix, TargetVector};
use crate::error::{Error, Result};

pub const NA: &str = "NA";

/// Parse a matrix with header from any reader.
pub fn read_matrix<R: Read>(reader: R) -> Result<(Vec<String>, IncompleteMatrix)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let names: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let d = names.len();
    let mut values = Vec::new();
    let mut mask = Vec::new();
    let mut n = 0;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != d {
            return Err(Error::DimensionMismatch(format!("line {} has {} fields, header has {d}", i + 2, rec.len())));
        }
        for (j, field) in rec.iter().enumerate() {
            if field.is_empty() || field == NA {
                values.push(0.0);
                mask.push(true);
            } else {
                let v: f64 =
                    field.parse().map_err(|_| Error::Parse(format!("line {}, column {}: {field:?} is not a number", i + 2, j + 1)))?;
                values.push(v);
                mask.push(false);
            }
        }
        n += 1;
    }
    let m = IncompleteMatrix::new(n, d, values, mask)?;
    Ok((names, m))
}

pub fn read_matrix_file(path: impl AsRef<Path>) -> Result<(Vec<String>, IncompleteMatrix)> {
    read_matrix(std::fs::File::open(path)?)
}

/// Default column names `x1..xd`.
pub fn default_names(d: usize) -> Vec<String> {
    (1..=d).map(|j| format!("x{j}")).collect()
}

pub fn write_matrix<W: Write>(writer: W, names: &[String], m: &IncompleteMatrix) -> Result<()> {
    if names.len() != m.d() {
        return Err(Error::DimensionMismatch(format!("{} names for {} columns", names.len(), m.d())));
    }
    let mut w = csv::WriterBuilder::new().from_writer(writer);
    w.write_record(names)?;
    let mut buf: Vec<String> = Vec::with_capacity(m.d());
    for i in 0..m.n() {
        buf.clear();
        buf.extend((0..m.d()).map(|j| match m.get(i, j) {
            Some(v) => format_f64(v),
            None => NA.to_owned(),
        }));
        w.write_record(&buf)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_matrix_file(path: impl AsRef<Path>, names: &[String], m: &IncompleteMatrix) -> Result<()> {
    write_matrix(std::fs::File::create(path)?, names, m)
}

/// Single-column target file with header `y`.
pub fn read_target<R: Read>(reader: R) -> Result<TargetVector> {
    let (_, m) = read_matrix(reader)?;
    if m.d() != 1 {
        return Err(Error::DimensionMismatch(format!("target file has {} columns", m.d())));
    }
    if !m.is_complete() {
        return Err(Error::InvalidParameter("target contains missing values".into()));
    }
    TargetVector::new(m.values().to_vec())
}

pub fn read_target_file(path: impl AsRef<Path>) -> Result<TargetVector> {
    read_target(std::fs::File::open(path)?)
}

pub fn write_target<W: Write>(writer: W, y: &[f64]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().from_writer(writer);
    w.write_record(["y"])?;
    for v in y {
        w.write_record([format_f64(*v)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_target_file(path: impl AsRef<Path>, y: &[f64]) -> Result<()> {
    write_target(std::fs::File::create(path)?, y)
}

/// Shortest round-trip decimal representation.
pub fn format_f64(v: f64) -> String {
    format!("{v}")
}

/// Fixed 17-significant-digit representation used in parameter and tree dumps.
pub fn format_sig17(v: f64) -> String {
    format!("{v:.16e}")
}
