//! Physical-balance diagnostics and the composite Physical Consistency
//! Score.
//!
//! Every sub-score maps a raw imbalance ratio `R` to `max(0, 1 - R / R_max)`.
//! Statistics are area-weighted over the midlatitude mask
//! (`20 <= |lat| <= 70`, `|f| >= f_floor`) except hydrostatic consistency,
//! which is global. Poles never contribute. Virtual temperature is
//! approximated by dry temperature.

pub mod sphere;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ensure_same_grid, weighted_mean, LatLonGrid, ScalarField};

/// Pressure ratio between the 850 and 500 hPa levels.
pub const LAYER_PRESSURE_RATIO: f64 = 850.0 / 500.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhysicalConstants {
    pub omega: f64,
    pub r_dry: f64,
    pub radius_m: f64,
    pub f_floor: f64,
    pub gravity: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self {
            omega: 7.2921e-5,
            r_dry: 287.05,
            radius_m: crate::grid::EARTH_RADIUS_M,
            f_floor: 1e-5,
            gravity: 9.80665,
        }
    }
}

impl PhysicalConstants {
    pub fn coriolis(&self, lat_deg: f64) -> f64 {
        2.0 * self.omega * lat_deg.to_radians().sin()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Normalizers {
    pub agr_max: f64,
    pub ndr_max: f64,
    pub thermal_max: f64,
    pub hydrostatic_max: f64,
}

impl Default for Normalizers {
    fn default() -> Self {
        Self {
            agr_max: 1.0,
            ndr_max: 1.0,
            thermal_max: 2.0,
            hydrostatic_max: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BalanceConfig {
    pub constants: PhysicalConstants,
    pub normalizers: Normalizers,
    pub midlat_min_deg: f64,
    pub midlat_max_deg: f64,
}

impl Default for BalanceConfig {
    fn default() -> Self {
        Self {
            constants: PhysicalConstants::default(),
            normalizers: Normalizers::default(),
            midlat_min_deg: 20.0,
            midlat_max_deg: 70.0,
        }
    }
}

impl BalanceConfig {
    /// Midlatitude points where the Coriolis parameter is usable.
    pub fn midlat_mask(&self, grid: &LatLonGrid) -> Vec<bool> {
        let mut mask = Vec::with_capacity(grid.len());
        for &lat in grid.lats() {
            let a = lat.abs();
            let keep = a >= self.midlat_min_deg
                && a <= self.midlat_max_deg
                && a < 90.0
                && self.constants.coriolis(lat).abs() >= self.constants.f_floor;
            mask.extend(std::iter::repeat_n(keep, grid.nlon()));
        }
        mask
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubScore {
    pub ratio: f64,
    pub score: f64,
}

impl SubScore {
    fn new(ratio: f64, max: f64) -> Self {
        let score = if ratio.is_finite() {
            (1.0 - ratio / max).clamp(0.0, 1.0)
        } else {
            0.0
        };
        Self { ratio, score }
    }
}

/// Weighted mean over `mask` restricted to points where every input is finite.
fn masked_mean(grid: &LatLonGrid, values: &[f64], mask: &[bool]) -> f64 {
    let m: Vec<bool> = mask.iter().zip(values).map(|(k, v)| *k && v.is_finite()).collect();
    let clean: Vec<f64> = values.iter().map(|v| if v.is_finite() { *v } else { 0.0 }).collect();
    weighted_mean(grid, &clean, Some(&m))
}

/// Mask of points where all given arrays are finite.
fn finite_mask(base: &[bool], arrays: &[&[f64]]) -> Vec<bool> {
    (0..base.len())
        .map(|k| base[k] && arrays.iter().all(|a| a[k].is_finite()))
        .collect()
}

fn check_grids(fields: &[&ScalarField]) -> Result<()> {
    for f in &fields[1..] {
        ensure_same_grid(fields[0], f)?;
    }
    Ok(())
}

/// Geostrophic wind from geopotential height (m). NaN where `|f|` is below
/// the floor or the stencil is undefined.
pub fn geostrophic_wind(grid: &LatLonGrid, z: &[f64], constants: &PhysicalConstants) -> (Vec<f64>, Vec<f64>) {
    let phi: Vec<f64> = z.iter().map(|h| constants.gravity * h).collect();
    let (gx, gy) = sphere::gradient(grid, &phi);
    rotate_over_f(grid, &gx, &gy, 1.0, constants)
}

/// `(scale / f) k x (gx, gy)` = `(scale / f) (-gy, gx)`.
fn rotate_over_f(
    grid: &LatLonGrid,
    gx: &[f64],
    gy: &[f64],
    scale: f64,
    constants: &PhysicalConstants,
) -> (Vec<f64>, Vec<f64>) {
    let nlon = grid.nlon();
    let mut u = vec![f64::NAN; gx.len()];
    let mut v = vec![f64::NAN; gx.len()];
    for (k, (x, y)) in gx.iter().zip(gy).enumerate() {
        let f = constants.coriolis(grid.lats()[k / nlon]);
        if f.abs() >= constants.f_floor {
            u[k] = -scale * y / f;
            v[k] = scale * x / f;
        }
    }
    (u, v)
}

/// Ageostrophic wind ratio `sqrt(<|v - v_g|^2> / <|v|^2>)` over midlatitudes.
pub fn geostrophic_score(u: &ScalarField, v: &ScalarField, z: &ScalarField, cfg: &BalanceConfig) -> Result<SubScore> {
    check_grids(&[u, v, z])?;
    let grid = u.grid();
    let (ug, vg) = geostrophic_wind(grid, z.values(), &cfg.constants);
    let mask = finite_mask(&cfg.midlat_mask(grid), &[&ug, &vg]);
    if !mask.iter().any(|m| *m) {
        return Err(Error::EmptyBalanceMask);
    }
    let dev: Vec<f64> = (0..grid.len())
        .map(|k| (u.values()[k] - ug[k]).powi(2) + (v.values()[k] - vg[k]).powi(2))
        .collect();
    let speed: Vec<f64> = (0..grid.len())
        .map(|k| u.values()[k].powi(2) + v.values()[k].powi(2))
        .collect();
    let num = masked_mean(grid, &dev, &mask);
    let den = masked_mean(grid, &speed, &mask);
    let agr = if den > 0.0 {
        (num / den).sqrt()
    } else if num > 0.0 {
        f64::INFINITY
    } else {
        return Err(Error::DegenerateFlow);
    };
    Ok(SubScore::new(agr, cfg.normalizers.agr_max))
}

/// Non-divergence ratio `<div^2> / <zeta^2>` over midlatitudes.
pub fn nondivergence_score(u: &ScalarField, v: &ScalarField, cfg: &BalanceConfig) -> Result<SubScore> {
    check_grids(&[u, v])?;
    let grid = u.grid();
    let div = sphere::divergence(grid, u.values(), v.values());
    let vort = sphere::vorticity(grid, u.values(), v.values());
    let mask = finite_mask(&cfg.midlat_mask(grid), &[&div, &vort]);
    if !mask.iter().any(|m| *m) {
        return Err(Error::EmptyBalanceMask);
    }
    let d2: Vec<f64> = div.iter().map(|d| d * d).collect();
    let z2: Vec<f64> = vort.iter().map(|z| z * z).collect();
    let den = masked_mean(grid, &z2, &mask);
    if !(den > 0.0) {
        return Err(Error::DegenerateFlow);
    }
    let ndr = masked_mean(grid, &d2, &mask) / den;
    Ok(SubScore::new(ndr, cfg.normalizers.ndr_max))
}

/// Thermal-wind shear predicted from a layer temperature:
/// `v(500) - v(850) = (R / f) ln(850/500) k x grad T`.
pub fn thermal_wind_shear(grid: &LatLonGrid, t_layer: &[f64], constants: &PhysicalConstants) -> (Vec<f64>, Vec<f64>) {
    let (gx, gy) = sphere::gradient(grid, t_layer);
    rotate_over_f(grid, &gx, &gy, constants.r_dry * LAYER_PRESSURE_RATIO.ln(), constants)
}

/// Relative departure of the 500-850 hPa shear from thermal-wind balance.
pub fn thermal_wind_score(
    u500: &ScalarField,
    v500: &ScalarField,
    u850: &ScalarField,
    v850: &ScalarField,
    t_layer: &ScalarField,
    cfg: &BalanceConfig,
) -> Result<SubScore> {
    check_grids(&[u500, v500, u850, v850, t_layer])?;
    let grid = u500.grid();
    let (tu, tv) = thermal_wind_shear(grid, t_layer.values(), &cfg.constants);
    let mask = finite_mask(&cfg.midlat_mask(grid), &[&tu, &tv]);
    if !mask.iter().any(|m| *m) {
        return Err(Error::EmptyBalanceMask);
    }
    let su: Vec<f64> = u500.values().iter().zip(u850.values()).map(|(a, b)| a - b).collect();
    let sv: Vec<f64> = v500.values().iter().zip(v850.values()).map(|(a, b)| a - b).collect();
    let dev: Vec<f64> = (0..grid.len())
        .map(|k| (su[k] - tu[k]).powi(2) + (sv[k] - tv[k]).powi(2))
        .collect();
    let mag: Vec<f64> = su.iter().zip(&sv).map(|(a, b)| a * a + b * b).collect();
    let den = masked_mean(grid, &mag, &mask);
    if !(den > 0.0) {
        return Err(Error::DegenerateShear);
    }
    let ratio = (masked_mean(grid, &dev, &mask) / den).sqrt();
    Ok(SubScore::new(ratio, cfg.normalizers.thermal_max))
}

/// Relative error between actual thickness `g (z500 - z850)` and the
/// hydrostatic thickness `R T ln(850/500)`, globally.
pub fn hydrostatic_score(z500: &ScalarField, z850: &ScalarField, t_layer: &ScalarField, cfg: &BalanceConfig) -> Result<SubScore> {
    check_grids(&[z500, z850, t_layer])?;
    let grid = z500.grid();
    let c = &cfg.constants;
    let log_p = LAYER_PRESSURE_RATIO.ln();
    let mask: Vec<bool> = grid
        .lats()
        .iter()
        .flat_map(|lat| std::iter::repeat_n(lat.abs() < 90.0, grid.nlon()))
        .collect();
    let mut abs_err = Vec::with_capacity(grid.len());
    let mut abs_actual = Vec::with_capacity(grid.len());
    for k in 0..grid.len() {
        let actual = c.gravity * (z500.values()[k] - z850.values()[k]);
        let expected = c.r_dry * t_layer.values()[k] * log_p;
        abs_err.push((actual - expected).abs());
        abs_actual.push(actual.abs());
    }
    let den = weighted_mean(grid, &abs_actual, Some(&mask));
    if !(den > 0.0) {
        return Err(Error::DegenerateThickness);
    }
    let rel = weighted_mean(grid, &abs_err, Some(&mask)) / den;
    Ok(SubScore::new(rel, cfg.normalizers.hydrostatic_max))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    pub geostrophic: SubScore,
    pub nondivergence: SubScore,
    pub thermal: SubScore,
    pub hydrostatic: SubScore,
    pub composite: f64,
    /// Humidity is ignored in the thickness check.
    pub dry_virtual_temperature: bool,
}

/// Equally weighted mean of the four sub-scores.
pub fn pcs_composite(
    geostrophic: Option<SubScore>,
    nondivergence: Option<SubScore>,
    thermal: Option<SubScore>,
    hydrostatic: Option<SubScore>,
) -> Result<BalanceReport> {
    let geostrophic = geostrophic.ok_or(Error::IncompleteBalance("geostrophic"))?;
    let nondivergence = nondivergence.ok_or(Error::IncompleteBalance("nondivergence"))?;
    let thermal = thermal.ok_or(Error::IncompleteBalance("thermal"))?;
    let hydrostatic = hydrostatic.ok_or(Error::IncompleteBalance("hydrostatic"))?;
    let composite = (geostrophic.score + nondivergence.score + thermal.score + hydrostatic.score) / 4.0;
    Ok(BalanceReport {
        geostrophic,
        nondivergence,
        thermal,
        hydrostatic,
        composite,
        dry_virtual_temperature: true,
    })
}

/// Fields needed for a full balance report at one valid time.
pub struct BalanceFields<'a> {
    pub u500: &'a ScalarField,
    pub v500: &'a ScalarField,
    pub u850: &'a ScalarField,
    pub v850: &'a ScalarField,
    pub z500: &'a ScalarField,
    pub z850: &'a ScalarField,
    pub t_layer: &'a ScalarField,
}

pub fn balance_report(fields: &BalanceFields<'_>, cfg: &BalanceConfig) -> Result<BalanceReport> {
    pcs_composite(
        Some(geostrophic_score(fields.u500, fields.v500, fields.z500, cfg)?),
        Some(nondivergence_score(fields.u500, fields.v500, cfg)?),
        Some(thermal_wind_score(fields.u500, fields.v500, fields.u850, fields.v850, fields.t_layer, cfg)?),
        Some(hydrostatic_score(fields.z500, fields.z850, fields.t_layer, cfg)?),
    )
}

/// Layer temperature proxy: mean of the 500 and 850 hPa temperatures when
/// both exist, else t850.
pub fn layer_temperature(t850: &ScalarField, t500: Option<&ScalarField>) -> Result<ScalarField> {
    match t500 {
        None => Ok(t850.clone()),
        Some(t5) => {
            ensure_same_grid(t850, t5)?;
            t850.with_values(t850.values().iter().zip(t5.values()).map(|(a, b)| 0.5 * (a + b)).collect())
        }
    }
}

#[cfg(test)]
mod tests;
