//! Error growth (effective Lyapunov exponent, doubling time) and kinetic
//! energy drift (Autoregressive Stability Index).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ensure_same_grid, weighted_mean, ScalarField};
use crate::stats::linear_fit;

/// Doubling time at which the normalized score saturates.
pub const DOUBLING_SCALE_HOURS: f64 = 48.0;
pub const DEFAULT_GROWTH_WINDOW_DAYS: (f64, f64) = (1.0, 5.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthFit {
    /// Slope of ln RMSE against lead, per day.
    pub lambda_eff: f64,
    /// `24 ln 2 / lambda`; `None` when the error does not grow.
    pub tau_d_hours: Option<f64>,
    pub tau_d_norm: f64,
    pub fit_window: (f64, f64),
    pub r2: f64,
}

fn days(lead_hours: u32) -> f64 {
    f64::from(lead_hours) / 24.0
}

fn log_series(series: &BTreeMap<u32, f64>, lo: f64, hi: f64, what: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (&lead, &value) in series {
        let d = days(lead);
        if d < lo - 1e-12 || d > hi + 1e-12 {
            continue;
        }
        if !(value > 0.0 && value.is_finite()) {
            return Err(Error::InvalidSeries(format!("{what} {value} at lead {lead} h")));
        }
        xs.push(d);
        ys.push(value.ln());
    }
    if xs.len() < 3 {
        return Err(Error::InvalidSeries(format!(
            "{} leads in [{lo}, {hi}] days, need at least 3",
            xs.len()
        )));
    }
    Ok((xs, ys))
}

/// Least-squares growth rate of ln RMSE over `window` (days, inclusive).
pub fn fit_lyapunov(rmse: &BTreeMap<u32, f64>, window: (f64, f64)) -> Result<GrowthFit> {
    let (xs, ys) = log_series(rmse, window.0, window.1, "RMSE")?;
    let line = linear_fit(&xs, &ys, None).ok_or_else(|| Error::InvalidSeries("degenerate lead grid".into()))?;
    let lambda = line.slope;
    let (tau, norm) = if lambda > 0.0 {
        let tau = 24.0 * std::f64::consts::LN_2 / lambda;
        (Some(tau), (tau / DOUBLING_SCALE_HOURS).min(1.0))
    } else {
        (None, 1.0)
    };
    Ok(GrowthFit {
        lambda_eff: lambda,
        tau_d_hours: tau,
        tau_d_norm: norm,
        fit_window: window,
        r2: line.r2,
    })
}

/// Area-weighted mean kinetic energy `(u^2 + v^2) / 2`.
pub fn kinetic_energy(u: &ScalarField, v: &ScalarField) -> Result<f64> {
    ensure_same_grid(u, v)?;
    let ke: Vec<f64> = u
        .values()
        .iter()
        .zip(v.values())
        .map(|(a, b)| 0.5 * (a * a + b * b))
        .collect();
    Ok(weighted_mean(u.grid(), &ke, None))
}

/// Kinetic energy per lead normalized by its value at the earliest lead.
pub fn ke_series(u: &BTreeMap<u32, ScalarField>, v: &BTreeMap<u32, ScalarField>) -> Result<BTreeMap<u32, f64>> {
    if let Some(lead) = u.keys().find(|l| !v.contains_key(l)).or_else(|| v.keys().find(|l| !u.contains_key(l))) {
        return Err(Error::MissingComponent(*lead));
    }
    let mut raw = BTreeMap::new();
    for (lead, uf) in u {
        raw.insert(*lead, kinetic_energy(uf, &v[lead])?);
    }
    let base = *raw
        .values()
        .next()
        .ok_or_else(|| Error::InvalidSeries("no leads".into()))?;
    if !(base > 0.0) {
        return Err(Error::InvalidSeries("initial kinetic energy is zero".into()));
    }
    Ok(raw.into_iter().map(|(l, k)| (l, k / base)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeDrift {
    /// Slope of ln(KE ratio) against lead, per day.
    pub gamma: f64,
    pub window_days: f64,
    pub asi: f64,
}

/// `ASI = clamp(1 - |gamma| T / ln 2, 0, 1)` with gamma regressed over `[0, T]`.
pub fn asi(ratio: &BTreeMap<u32, f64>, window_days: f64) -> Result<KeDrift> {
    if !(window_days > 0.0) {
        return Err(Error::InvalidSeries(format!("window {window_days} days")));
    }
    let (xs, ys) = log_series(ratio, 0.0, window_days, "KE ratio")?;
    let line = linear_fit(&xs, &ys, None).ok_or_else(|| Error::InvalidSeries("degenerate lead grid".into()))?;
    Ok(KeDrift {
        gamma: line.slope,
        window_days,
        asi: asi_from_gamma(line.slope, window_days),
    })
}

pub fn asi_from_gamma(gamma: f64, window_days: f64) -> f64 {
    (1.0 - gamma.abs() * window_days / std::f64::consts::LN_2).clamp(0.0, 1.0)
}
