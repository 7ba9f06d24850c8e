//! Synthetic reference benchmark: a multi-site data generator, a
//! preparation cube, two model cubes and a metrics cube, all deterministic.
//!
//! The same binary, `fedeval-refbench`, is the entrypoint of every cube and
//! also generates sites and writes cube bundles.

pub mod bundle;
pub mod cli;
pub mod image;
pub mod metrics;
pub mod model;
pub mod prep;
pub mod rng;
pub mod site;

use std::io;
use std::path::Path;

use thiserror::Error;

pub const FEATURES: usize = 4;

/// Text form of every real number the cubes write.
pub fn fmt_value(v: f64) -> String {
    format!("{v:.6}")
}

#[derive(Debug, Error)]
pub enum Error {
    /// Input violated the task contract; the CLI exits 2.
    #[error("{0}")]
    Contract(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Contract(_) => 2,
            Error::Io(_) | Error::Csv(_) => 1,
        }
    }
}

pub(crate) fn contract<T>(msg: impl Into<String>) -> Result<T, Error> {
    Err(Error::Contract(msg.into()))
}

/// One column of a headered CSV file, by name.
pub fn read_column(path: &Path, name: &str) -> Result<Vec<String>, Error> {
    let mut rdr = csv::Reader::from_path(path)?;
    let idx = match rdr.headers()?.iter().position(|h| h == name) {
        Some(i) => i,
        None => return contract(format!("{}: no column {name:?}", path.display())),
    };
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        out.push(rec.get(idx).unwrap_or("").to_owned());
    }
    Ok(out)
}

/// Feature rows `f0..f3`; extra columns are ignored and anything that does
/// not parse becomes NaN.
pub fn read_features(path: &Path) -> Result<Vec<[f64; FEATURES]>, Error> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_path(path)?;
    let headers = rdr.headers()?.clone();
    let mut idx = [0usize; FEATURES];
    for (j, slot) in idx.iter_mut().enumerate() {
        let name = format!("f{j}");
        *slot = match headers.iter().position(|h| h == name) {
            Some(i) => i,
            None => return contract(format!("{}: no column {name:?}", path.display())),
        };
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let mut row = [f64::NAN; FEATURES];
        for (j, &i) in idx.iter().enumerate() {
            row[j] = rec.get(i).and_then(|s| s.parse().ok()).unwrap_or(f64::NAN);
        }
        rows.push(row);
    }
    Ok(rows)
}

/// 0/1 labels in column `name`.
pub fn read_binary(path: &Path, name: &str) -> Result<Vec<u8>, Error> {
    read_column(path, name)?
        .into_iter()
        .enumerate()
        .map(|(i, s)| match s.as_str() {
            "0" => Ok(0),
            "1" => Ok(1),
            other => contract(format!(
                "{}: row {}: {name} must be 0 or 1, got {other:?}",
                path.display(),
                i + 1
            )),
        })
        .collect()
}

pub fn write_binary(path: &Path, name: &str, values: &[u8]) -> Result<(), Error> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([name])?;
    for v in values {
        w.write_record([v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
