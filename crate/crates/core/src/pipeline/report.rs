//! Deterministic CSV/JSON report writers. Every file records the run seed.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Self {
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

/// Shortest round-trip decimal form; stable across platforms.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else if x.is_nan() {
        "NaN".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

pub fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub fn seed_line(seed: u64) -> String {
    format!("# wxdiag seed={seed}\n")
}

pub fn csv_text(seed: u64, table: &Table) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&table.header)?;
    for r in &table.rows {
        w.write_record(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
    let body = String::from_utf8(bytes).map_err(|e| Error::Config(e.to_string()))?;
    Ok(seed_line(seed) + &body)
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    Ok(())
}

pub fn write_csv(path: &Path, seed: u64, table: &Table) -> Result<()> {
    ensure_parent(path)?;
    fs::write(path, csv_text(seed, table)?).map_err(|e| Error::io(path, e))
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    report: &'a str,
    seed: u64,
    data: &'a T,
}

pub fn write_json<T: Serialize>(path: &Path, seed: u64, report: &str, data: &T) -> Result<()> {
    ensure_parent(path)?;
    let mut text = serde_json::to_string_pretty(&Envelope { report, seed, data })?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
