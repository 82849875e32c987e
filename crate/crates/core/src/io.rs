//! Headerless CSV sample files and JSON instance documents.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::SampleMatrix;
use crate::samplers::ChangeInstance;

/// Reads one sample per row; every row must have the same number of finite
/// values. Row and column numbers in errors are 1-based.
pub fn read_samples(path: impl AsRef<Path>) -> Result<SampleMatrix> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let err = |row: usize, column: usize, message: String| Error::Csv {
        path: path.to_path_buf(),
        row,
        column,
        message,
    };
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + 1;
        if let Some(first) = rows.first() {
            if record.len() != first.len() {
                return Err(err(
                    row,
                    record.len().min(first.len()) + 1,
                    format!("expected {} values, found {}", first.len(), record.len()),
                ));
            }
        }
        let mut values = Vec::with_capacity(record.len());
        for (j, field) in record.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| err(row, j + 1, format!("cannot parse {field:?} as a number")))?;
            if !v.is_finite() {
                return Err(err(row, j + 1, format!("non-finite value {field:?}")));
            }
            values.push(v);
        }
        rows.push(values);
    }
    if rows.is_empty() {
        return Err(err(0, 0, "file contains no samples".into()));
    }
    SampleMatrix::from_rows(&rows)
}

/// Writes samples with shortest round-trip formatting, so reading the file
/// back reproduces the matrix exactly.
pub fn write_samples(path: impl AsRef<Path>, data: &SampleMatrix) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let x = data.values();
    for i in 0..data.n() {
        let line: Vec<String> = (0..data.m()).map(|j| x[(i, j)].to_string()).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct InstanceDocument<'a> {
    seed: u64,
    instance: &'a ChangeInstance,
}

pub fn write_instance_json(path: impl AsRef<Path>, instance: &ChangeInstance, seed: u64) -> Result<()> {
    write_json(path, &InstanceDocument { seed, instance })
}

pub fn write_json<T: Serialize + ?Sized>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}
