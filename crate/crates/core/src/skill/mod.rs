//! Deterministic skill: area-weighted RMSE (global and per band), anomaly
//! correlation, inter-initialization confidence intervals and scorecards.

mod climatology;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ensure_same_grid, weighted_mean, ScalarField, Variable};
use crate::stats;

pub use climatology::{compute_climatology, ClimSlot, Climatology, WINDOW_HALF_DAYS};

/// z-score for a two-sided 90% interval.
pub const Z90: f64 = 1.645;

fn check_pair(forecast: &ScalarField, verify: &ScalarField) -> Result<()> {
    ensure_same_grid(forecast, verify)?;
    let (f, v) = (forecast.meta(), verify.meta());
    if f.variable != v.variable {
        return Err(Error::InvalidField(format!("comparing {} with {}", f.variable, v.variable)));
    }
    Ok(())
}

/// Area-weighted RMSE, optionally over a point mask.
pub fn rmse(forecast: &ScalarField, verify: &ScalarField, mask: Option<&[bool]>) -> Result<f64> {
    check_pair(forecast, verify)?;
    let sq: Vec<f64> = forecast
        .values()
        .iter()
        .zip(verify.values())
        .map(|(f, v)| (f - v).powi(2))
        .collect();
    if let Some(m) = mask {
        if m.len() != sq.len() {
            return Err(Error::InvalidField("mask size does not match grid".into()));
        }
    }
    let mse = weighted_mean(forecast.grid(), &sq, mask);
    if mse.is_nan() {
        return Err(Error::InvalidField("mask selects no weighted points".into()));
    }
    Ok(mse.sqrt())
}

/// Anomaly correlation against a climatology. The default is uncentered;
/// `centered` removes the weighted mean anomaly of each field first.
pub fn acc(forecast: &ScalarField, verify: &ScalarField, clim: &Climatology, centered: bool) -> Result<f64> {
    check_pair(forecast, verify)?;
    let slot = clim.slot_for(verify)?;
    let grid = forecast.grid();
    let mut fa: Vec<f64> = forecast.values().iter().zip(&slot.mu).map(|(f, m)| f - m).collect();
    let mut va: Vec<f64> = verify.values().iter().zip(&slot.mu).map(|(v, m)| v - m).collect();
    if centered {
        let mf = weighted_mean(grid, &fa, None);
        let mv = weighted_mean(grid, &va, None);
        fa.iter_mut().for_each(|x| *x -= mf);
        va.iter_mut().for_each(|x| *x -= mv);
    }
    let prod: Vec<f64> = fa.iter().zip(&va).map(|(a, b)| a * b).collect();
    let ff: Vec<f64> = fa.iter().map(|a| a * a).collect();
    let vv: Vec<f64> = va.iter().map(|a| a * a).collect();
    let cov = weighted_mean(grid, &prod, None);
    let (sf, sv) = (weighted_mean(grid, &ff, None), weighted_mean(grid, &vv, None));
    if sf <= 0.0 || sv <= 0.0 {
        return Err(Error::DegenerateAnomaly);
    }
    Ok((cov / (sf * sv).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub mean: f64,
    pub half_width: f64,
    pub n: usize,
}

/// Mean and 90% half-width `1.645 s / sqrt(n)` over initialization dates.
pub fn confidence_interval(samples: &[f64]) -> Result<ConfidenceInterval> {
    if samples.len() < 2 {
        return Err(Error::InsufficientSamples(samples.len()));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidSeries("non-finite sample".into()));
    }
    let n = samples.len();
    Ok(ConfidenceInterval {
        mean: stats::mean(samples),
        half_width: Z90 * stats::sample_std(samples) / (n as f64).sqrt(),
        n,
    })
}

/// Per-lead summary of a metric over initialization dates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSeries {
    pub model: String,
    pub variable: Variable,
    pub leads: Vec<u32>,
    pub mean: Vec<f64>,
    pub ci_half_width: Vec<f64>,
    pub n: Vec<usize>,
}

impl MetricSeries {
    /// Builds a series from per-lead samples. A lead with a single sample
    /// gets a zero-width interval.
    pub fn from_samples(model: impl Into<String>, variable: Variable, samples: &BTreeMap<u32, Vec<f64>>) -> Result<Self> {
        let mut s = MetricSeries {
            model: model.into(),
            variable,
            leads: Vec::new(),
            mean: Vec::new(),
            ci_half_width: Vec::new(),
            n: Vec::new(),
        };
        for (&lead, xs) in samples {
            if xs.is_empty() {
                continue;
            }
            let (mean, hw) = match confidence_interval(xs) {
                Ok(ci) => (ci.mean, ci.half_width),
                Err(Error::InsufficientSamples(_)) => (xs[0], 0.0),
                Err(e) => return Err(e),
            };
            s.leads.push(lead);
            s.mean.push(mean);
            s.ci_half_width.push(hw);
            s.n.push(xs.len());
        }
        Ok(s)
    }

    pub fn value_at(&self, lead: u32) -> Option<f64> {
        self.leads.iter().position(|l| *l == lead).map(|i| self.mean[i])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scorecard {
    pub leads: Vec<u32>,
    pub models: Vec<String>,
    /// `ranks[model][lead]`, 1 = lowest value; ties share the lower rank.
    pub ranks: Vec<Vec<Option<u32>>>,
}

/// Competition ranking (1, 1, 3) of models by their metric at each lead,
/// lower is better. Models without a value at a lead are unranked there.
pub fn scorecard(table: &[MetricSeries]) -> Scorecard {
    let leads: Vec<u32> = table
        .iter()
        .flat_map(|s| s.leads.iter().copied())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let models: Vec<String> = table.iter().map(|s| s.model.clone()).collect();
    let mut ranks = vec![vec![None; leads.len()]; table.len()];
    for (li, &lead) in leads.iter().enumerate() {
        let values: Vec<Option<f64>> = table.iter().map(|s| s.value_at(lead)).collect();
        for (mi, v) in values.iter().enumerate() {
            if let Some(v) = v {
                let better = values.iter().flatten().filter(|o| *o < v).count();
                ranks[mi][li] = Some(better as u32 + 1);
            }
        }
    }
    Scorecard { leads, models, ranks }
}
