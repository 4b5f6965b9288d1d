//! Precomputed metric tables (`model,lead_hours,sfi,l_eff,tau_d,ees,pcs,asi[,hmas]`).

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HmasInputs;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub model: String,
    pub lead_hours: u32,
    pub sfi: f64,
    pub l_eff: f64,
    pub tau_d: f64,
    pub ees: f64,
    pub pcs: f64,
    pub asi: f64,
    /// Reference composite, when the table carries one.
    #[serde(default)]
    pub hmas: Option<f64>,
}

impl MetricRow {
    pub fn inputs(&self) -> HmasInputs {
        HmasInputs {
            sfi: self.sfi,
            l_eff: self.l_eff,
            tau_d: self.tau_d,
            ees: self.ees,
            pcs: self.pcs,
            asi: self.asi,
        }
    }
}

/// Parses and range-checks a metrics table. Lines starting with `#` are
/// comments.
pub fn parse_metrics_csv(text: &str) -> Result<Vec<MetricRow>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for record in reader.deserialize() {
        let row: MetricRow = record?;
        if row.model.is_empty() {
            return Err(Error::Config("metrics row with empty model name".into()));
        }
        row.inputs().validate()?;
        if let Some(h) = row.hmas {
            if !(0.0..=1.0).contains(&h) {
                return Err(Error::OutOfRangeMetric { name: "hmas", value: h });
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_metrics_csv(&text)
}
