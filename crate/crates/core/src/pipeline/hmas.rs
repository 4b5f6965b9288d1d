//! HMAS tables per lead, shared by the full pipeline and by precomputed
//! metric fixtures.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::report::{num, opt, write_csv, write_json, Table};
use crate::composite::{
    hmas_score, metric_correlation, pareto_front, weight_sensitivity, CorrelationMatrix, HmasInputs, MetricRow,
    SensitivityTable, WeightScheme, METRIC_NAMES,
};
use crate::error::{Error, Result};

/// Six metrics for one model at one lead, optionally with a reference score.
#[derive(Debug, Clone, PartialEq)]
pub struct HmasCell {
    pub model: String,
    pub lead_hours: u32,
    pub inputs: HmasInputs,
    pub published: Option<f64>,
}

impl From<&MetricRow> for HmasCell {
    fn from(r: &MetricRow) -> Self {
        Self {
            model: r.model.clone(),
            lead_hours: r.lead_hours,
            inputs: r.inputs(),
            published: r.hmas,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HmasRow {
    pub model: String,
    #[serde(flatten)]
    pub metrics: HmasInputs,
    pub hmas: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub published_hmas: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub abs_diff: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HmasTable {
    pub lead_hours: u32,
    pub scheme: String,
    pub weights: [f64; 6],
    /// Sorted by HMAS, best first; ties by model name.
    pub rows: Vec<HmasRow>,
    pub sensitivity: Option<SensitivityTable>,
    pub correlation: Option<CorrelationMatrix>,
    /// Models not dominated on all six metrics, in row order.
    pub pareto_front: Vec<String>,
}

pub fn build_hmas_tables(cells: &[HmasCell], schemes: &[WeightScheme]) -> Result<Vec<HmasTable>> {
    let headline = schemes
        .first()
        .ok_or_else(|| Error::InvalidWeights("no weight schemes".into()))?;
    let mut by_lead: BTreeMap<u32, Vec<&HmasCell>> = BTreeMap::new();
    for c in cells {
        by_lead.entry(c.lead_hours).or_default().push(c);
    }
    let mut tables = Vec::new();
    for (lead, mut group) in by_lead {
        group.sort_by(|a, b| a.model.cmp(&b.model));
        if group.windows(2).any(|w| w[0].model == w[1].model) {
            return Err(Error::Config(format!("duplicate model rows at lead {lead} h")));
        }
        let mut rows = Vec::with_capacity(group.len());
        for c in &group {
            let hmas = hmas_score(&c.inputs, headline)?;
            rows.push(HmasRow {
                model: c.model.clone(),
                metrics: c.inputs,
                hmas,
                published_hmas: c.published,
                abs_diff: c.published.map(|p| (hmas - p).abs()),
            });
        }
        rows.sort_by(|a, b| b.hmas.total_cmp(&a.hmas).then_with(|| a.model.cmp(&b.model)));
        let named: Vec<(String, HmasInputs)> = rows.iter().map(|r| (r.model.clone(), r.metrics)).collect();
        let sensitivity = match weight_sensitivity(&named, schemes) {
            Ok(t) => Some(t),
            Err(e) => {
                log::info!("lead {lead} h: no weight sensitivity ({e})");
                None
            }
        };
        let metrics: Vec<HmasInputs> = rows.iter().map(|r| r.metrics).collect();
        let correlation = metric_correlation(&metrics).ok();
        let points: Vec<Vec<f64>> = metrics.iter().map(|m| m.as_array().to_vec()).collect();
        let pareto_front = pareto_front(&points)?.into_iter().map(|i| rows[i].model.clone()).collect();
        tables.push(HmasTable {
            lead_hours: lead,
            scheme: headline.name.clone(),
            weights: headline.weights,
            rows,
            sensitivity,
            correlation,
            pareto_front,
        });
    }
    Ok(tables)
}

pub fn write_hmas_reports(out_dir: &Path, seed: u64, tables: &[HmasTable]) -> Result<Vec<PathBuf>> {
    let mut main = Table::new(&[
        "lead_hours",
        "model",
        "sfi",
        "l_eff",
        "tau_d",
        "ees",
        "pcs",
        "asi",
        "hmas",
        "published_hmas",
        "abs_diff",
    ]);
    let mut sens = Table::new(&["lead_hours", "scheme", "model", "hmas", "rank"]);
    let mut corr = Table::new(&["lead_hours", "metric_a", "metric_b", "rho"]);
    for t in tables {
        let lead = t.lead_hours.to_string();
        for r in &t.rows {
            let mut row = vec![lead.clone(), r.model.clone()];
            row.extend(r.metrics.as_array().iter().map(|x| num(*x)));
            row.extend([num(r.hmas), opt(r.published_hmas), opt(r.abs_diff)]);
            main.push(row);
        }
        if let Some(s) = &t.sensitivity {
            for (si, scheme) in s.schemes.iter().enumerate() {
                for (mi, model) in s.models.iter().enumerate() {
                    sens.push(vec![
                        lead.clone(),
                        scheme.clone(),
                        model.clone(),
                        num(s.scores[si][mi]),
                        num(s.ranks[si][mi]),
                    ]);
                }
            }
        }
        if let Some(c) = &t.correlation {
            for (i, a) in METRIC_NAMES.iter().enumerate() {
                for (j, b) in METRIC_NAMES.iter().enumerate() {
                    corr.push(vec![lead.clone(), a.to_string(), b.to_string(), opt(c.rho[i][j])]);
                }
            }
        }
    }
    let paths = [
        out_dir.join("hmas.json"),
        out_dir.join("hmas_table.csv"),
        out_dir.join("hmas_sensitivity.csv"),
        out_dir.join("hmas_correlation.csv"),
    ];
    write_json(&paths[0], seed, "hmas", &tables)?;
    write_csv(&paths[1], seed, &main)?;
    write_csv(&paths[2], seed, &sens)?;
    write_csv(&paths[3], seed, &corr)?;
    Ok(paths.to_vec())
}
