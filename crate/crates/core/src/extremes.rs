//! Climatology-conditioned extremes: exceedance masks, Extreme Event Skill,
//! tail bias-exceedance curves and the attenuation coefficient.
//!
//! Cold extremes reuse the warm-tail machinery by negating fields and the
//! climatological mean.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ensure_same_grid, weighted_mean, ScalarField};
use crate::skill::{rmse, Climatology};
use crate::stats::linear_fit;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tail {
    Warm,
    Cold,
}

impl Tail {
    fn sign(self) -> f64 {
        match self {
            Tail::Warm => 1.0,
            Tail::Cold => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TailConfig {
    pub tail: Tail,
    pub threshold_sigmas: f64,
    pub bin_width: f64,
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub fit_lo: f64,
    pub fit_hi: f64,
}

impl Default for TailConfig {
    fn default() -> Self {
        Self {
            tail: Tail::Warm,
            threshold_sigmas: 2.0,
            bin_width: 0.25,
            bin_lo: 2.0,
            bin_hi: 6.0,
            fit_lo: 2.0,
            fit_hi: 5.0,
        }
    }
}

impl TailConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.bin_width > 0.0
            && self.bin_hi > self.bin_lo
            && self.fit_hi > self.fit_lo
            && self.threshold_sigmas.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid tail configuration {self:?}")))
        }
    }

    pub fn bins(&self) -> usize {
        ((self.bin_hi - self.bin_lo) / self.bin_width).round() as usize
    }

    pub fn bin_center(&self, b: usize) -> f64 {
        self.bin_lo + (b as f64 + 0.5) * self.bin_width
    }
}

/// Points beyond the climatological threshold and their standardized
/// exceedance `delta` (NaN elsewhere).
#[derive(Debug, Clone, PartialEq)]
pub struct Exceedance {
    pub mask: Vec<bool>,
    pub delta: Vec<f64>,
}

impl Exceedance {
    pub fn count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }
}

pub fn exceedance_mask(verify: &ScalarField, clim: &Climatology, threshold_sigmas: f64, tail: Tail) -> Result<Exceedance> {
    let slot = clim.slot_for(verify)?;
    let s = tail.sign();
    let mut mask = Vec::with_capacity(verify.values().len());
    let mut delta = Vec::with_capacity(verify.values().len());
    for ((v, mu), sigma) in verify.values().iter().zip(&slot.mu).zip(&slot.sigma) {
        if *sigma > 0.0 {
            let d = s * (v - mu) / sigma;
            let hit = d > threshold_sigmas;
            mask.push(hit);
            delta.push(if hit { d } else { f64::NAN });
        } else {
            mask.push(false);
            delta.push(f64::NAN);
        }
    }
    Ok(Exceedance { mask, delta })
}

/// Extreme Event Skill `1 - RMSE_cond / (3 RMSE_uncond)`, clamped to [0, 1].
pub fn ees(forecast: &ScalarField, verify: &ScalarField, clim: &Climatology, cfg: &TailConfig) -> Result<f64> {
    let ex = exceedance_mask(verify, clim, cfg.threshold_sigmas, cfg.tail)?;
    if ex.count() == 0 {
        return Err(Error::NoExtremes);
    }
    let uncond = rmse(forecast, verify, None)?;
    if !(uncond > 0.0) {
        return Err(Error::ZeroRmse);
    }
    let cond = rmse(forecast, verify, Some(&ex.mask))?;
    Ok(ees_from_rmse(cond, uncond))
}

pub fn ees_from_rmse(conditional: f64, unconditional: f64) -> f64 {
    (1.0 - conditional / (3.0 * unconditional)).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailCurve {
    pub bin_centers: Vec<f64>,
    /// Mean forecast-minus-verification bias per bin (sign-flipped for the
    /// cold tail); `None` for empty bins.
    pub mean_bias: Vec<Option<f64>>,
    pub counts: Vec<usize>,
    /// Magnitude of the fitted negative slope: `-slope`.
    pub alpha: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Accumulates per-bin bias sums, so several fields (init dates) can feed
/// one curve.
#[derive(Debug, Clone)]
pub struct TailAccumulator {
    cfg: TailConfig,
    sums: Vec<f64>,
    counts: Vec<usize>,
}

impl TailAccumulator {
    pub fn new(cfg: TailConfig) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.bins();
        Ok(Self {
            cfg,
            sums: vec![0.0; n],
            counts: vec![0; n],
        })
    }

    pub fn add(&mut self, forecast: &ScalarField, verify: &ScalarField, clim: &Climatology) -> Result<usize> {
        ensure_same_grid(forecast, verify)?;
        let ex = exceedance_mask(verify, clim, self.cfg.threshold_sigmas, self.cfg.tail)?;
        let s = self.cfg.tail.sign();
        let mut added = 0;
        for (k, d) in ex.delta.iter().enumerate() {
            if !ex.mask[k] || *d < self.cfg.bin_lo || *d >= self.cfg.bin_hi {
                continue;
            }
            let b = (((d - self.cfg.bin_lo) / self.cfg.bin_width).floor() as usize).min(self.sums.len() - 1);
            self.sums[b] += s * (forecast.values()[k] - verify.values()[k]);
            self.counts[b] += 1;
            added += 1;
        }
        Ok(added)
    }

    pub fn finish(&self) -> Result<TailCurve> {
        let cfg = &self.cfg;
        let bin_centers: Vec<f64> = (0..self.sums.len()).map(|b| cfg.bin_center(b)).collect();
        let mean_bias: Vec<Option<f64>> = self
            .sums
            .iter()
            .zip(&self.counts)
            .map(|(s, &c)| (c > 0).then(|| s / c as f64))
            .collect();
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        let mut ws = Vec::new();
        for (b, center) in bin_centers.iter().enumerate() {
            if let Some(m) = mean_bias[b] {
                if *center >= cfg.fit_lo && *center <= cfg.fit_hi {
                    xs.push(*center);
                    ys.push(m);
                    ws.push(self.counts[b] as f64);
                }
            }
        }
        if xs.len() < 2 {
            return Err(Error::InsufficientTail(xs.len()));
        }
        let line = linear_fit(&xs, &ys, Some(&ws)).ok_or(Error::InsufficientTail(xs.len()))?;
        Ok(TailCurve {
            bin_centers,
            mean_bias,
            counts: self.counts.clone(),
            alpha: -line.slope,
            intercept: line.intercept,
            r2: line.r2,
        })
    }
}

/// Bin-wise bias-vs-exceedance curve with a count-weighted line fit.
pub fn tail_curve(forecast: &ScalarField, verify: &ScalarField, clim: &Climatology, cfg: &TailConfig) -> Result<TailCurve> {
    let mut acc = TailAccumulator::new(*cfg)?;
    if acc.add(forecast, verify, clim)? == 0 {
        return Err(Error::NoExtremes);
    }
    acc.finish()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaSeries {
    /// lead -> (alpha, r2)
    pub points: BTreeMap<u32, (f64, f64)>,
    /// Leads without a usable curve.
    pub flagged: Vec<u32>,
}

pub fn alpha_evolution(curves: &BTreeMap<u32, Option<TailCurve>>) -> AlphaSeries {
    let mut points = BTreeMap::new();
    let mut flagged = Vec::new();
    for (lead, curve) in curves {
        match curve {
            Some(c) => {
                points.insert(*lead, (c.alpha, c.r2));
            }
            None => flagged.push(*lead),
        }
    }
    AlphaSeries { points, flagged }
}

/// Area-weighted fraction of points flagged by an exceedance mask.
pub fn exceedance_fraction(verify: &ScalarField, ex: &Exceedance) -> f64 {
    let ones: Vec<f64> = ex.mask.iter().map(|m| if *m { 1.0 } else { 0.0 }).collect();
    weighted_mean(verify.grid(), &ones, None)
}
