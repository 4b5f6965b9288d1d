//! Latitude-longitude grids, area weights, field containers and the
//! forecast index consumed by every metric.
//!
//! Latitudes are always held in ascending order. A grid remembers whether its
//! source file listed them descending so writers can restore file order.

mod set;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use chrono::{DateTime, Datelike, Duration, Timelike, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use set::{ForecastKey, ForecastSet, ModelMeta};

pub const EARTH_RADIUS_M: f64 = 6.371e6;

const UNIFORM_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct LatLonGrid {
    lats: Vec<f64>,
    lons: Vec<f64>,
    radius_m: f64,
    /// cos(lat) per row, normalized so the mean over all grid points is 1.
    weights: Vec<f64>,
    source_descending: bool,
}

impl PartialEq for LatLonGrid {
    fn eq(&self, other: &Self) -> bool {
        self.lats == other.lats && self.lons == other.lons && self.radius_m == other.radius_m
    }
}

impl LatLonGrid {
    /// Builds a grid from coordinates in file order. Latitudes may be
    /// ascending or descending; they are stored ascending.
    pub fn new(lats: Vec<f64>, lons: Vec<f64>) -> Result<Self> {
        Self::with_radius(lats, lons, EARTH_RADIUS_M)
    }

    pub fn with_radius(mut lats: Vec<f64>, lons: Vec<f64>, radius_m: f64) -> Result<Self> {
        if lats.len() < 3 {
            return Err(Error::InvalidGrid(format!("nlat = {} < 3", lats.len())));
        }
        if lons.len() < 4 {
            return Err(Error::InvalidGrid(format!("nlon = {} < 4", lons.len())));
        }
        if !(radius_m.is_finite() && radius_m > 0.0) {
            return Err(Error::InvalidGrid(format!("radius {radius_m} m")));
        }
        if lats.iter().chain(&lons).any(|x| !x.is_finite()) {
            return Err(Error::InvalidGrid("non-finite coordinate".into()));
        }
        if lats.iter().any(|&p| !(-90.0..=90.0).contains(&p)) {
            return Err(Error::InvalidGrid("latitude outside [-90, 90]".into()));
        }
        let ascending = lats.windows(2).all(|w| w[1] > w[0]);
        let descending = lats.windows(2).all(|w| w[1] < w[0]);
        if !ascending && !descending {
            return Err(Error::InvalidGrid("latitudes not strictly monotone".into()));
        }
        if descending {
            lats.reverse();
        }

        let step = lons[1] - lons[0];
        if !(step > 0.0) {
            return Err(Error::InvalidGrid("longitudes must increase".into()));
        }
        let uniform = lons
            .windows(2)
            .all(|w| ((w[1] - w[0]) - step).abs() <= UNIFORM_TOL * step.max(1.0));
        if !uniform {
            return Err(Error::InvalidGrid("longitudes not uniformly spaced".into()));
        }
        if lons[lons.len() - 1] - lons[0] >= 360.0 {
            return Err(Error::InvalidGrid("longitudes span 360 degrees or more".into()));
        }

        let cosines: Vec<f64> = lats
            .iter()
            .map(|&p| if p.abs() == 90.0 { 0.0 } else { p.to_radians().cos().max(0.0) })
            .collect();
        let mean = cosines.iter().sum::<f64>() / cosines.len() as f64;
        let weights = cosines.iter().map(|c| c / mean).collect();

        Ok(Self {
            lats,
            lons,
            radius_m,
            weights,
            source_descending: descending,
        })
    }

    /// Regular global grid. With `include_poles` the rows run pole to pole
    /// inclusive; otherwise rows sit at cell centres.
    pub fn regular(nlat: usize, nlon: usize, include_poles: bool) -> Result<Self> {
        let lats = if include_poles {
            let d = 180.0 / (nlat.max(2) - 1) as f64;
            (0..nlat).map(|i| -90.0 + i as f64 * d).collect()
        } else {
            let d = 180.0 / nlat as f64;
            (0..nlat).map(|i| -90.0 + (i as f64 + 0.5) * d).collect()
        };
        let d = 360.0 / nlon as f64;
        let lons = (0..nlon).map(|j| j as f64 * d).collect();
        Self::new(lats, lons)
    }

    pub fn nlat(&self) -> usize {
        self.lats.len()
    }

    pub fn nlon(&self) -> usize {
        self.lons.len()
    }

    pub fn len(&self) -> usize {
        self.lats.len() * self.lons.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn lats(&self) -> &[f64] {
        &self.lats
    }

    pub fn lons(&self) -> &[f64] {
        &self.lons
    }

    pub fn radius_m(&self) -> f64 {
        self.radius_m
    }

    /// Normalized area weight of each latitude row.
    pub fn row_weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight_at(&self, index: usize) -> f64 {
        self.weights[index / self.nlon()]
    }

    pub fn source_descending(&self) -> bool {
        self.source_descending
    }

    pub fn lon_step_deg(&self) -> f64 {
        self.lons[1] - self.lons[0]
    }

    /// True when the longitudes wrap around the full circle.
    pub fn is_periodic(&self) -> bool {
        (self.lon_step_deg() * self.nlon() as f64 - 360.0).abs() < 1e-6
    }

    pub fn has_uniform_lats(&self) -> bool {
        let d = self.lats[1] - self.lats[0];
        self.lats
            .windows(2)
            .all(|w| ((w[1] - w[0]) - d).abs() <= UNIFORM_TOL * d.max(1.0))
    }

    pub fn index(&self, lat: usize, lon: usize) -> usize {
        lat * self.nlon() + lon
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variable {
    Z500,
    Z850,
    T2m,
    T500,
    T850,
    U500,
    V500,
    U850,
    V850,
    Q700,
}

impl Variable {
    pub const ALL: [Variable; 10] = [
        Variable::Z500,
        Variable::Z850,
        Variable::T2m,
        Variable::T500,
        Variable::T850,
        Variable::U500,
        Variable::V500,
        Variable::U850,
        Variable::V850,
        Variable::Q700,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variable::Z500 => "z500",
            Variable::Z850 => "z850",
            Variable::T2m => "t2m",
            Variable::T500 => "t500",
            Variable::T850 => "t850",
            Variable::U500 => "u500",
            Variable::V500 => "v500",
            Variable::U850 => "u850",
            Variable::V850 => "v850",
            Variable::Q700 => "q700",
        }
    }

    pub fn is_temperature(self) -> bool {
        matches!(self, Variable::T2m | Variable::T500 | Variable::T850)
    }

    /// Lower bound on climatological standard deviation.
    pub fn sigma_floor(self) -> f64 {
        if self.is_temperature() {
            0.5
        } else {
            0.0
        }
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variable::ALL
            .into_iter()
            .find(|v| v.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown variable {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldMeta {
    pub variable: Variable,
    pub model: String,
    pub init_time: DateTime<Utc>,
    pub lead_hours: u32,
}

impl FieldMeta {
    pub fn new(variable: Variable, model: impl Into<String>, init_time: DateTime<Utc>, lead_hours: u32) -> Self {
        Self {
            variable,
            model: model.into(),
            init_time,
            lead_hours,
        }
    }

    pub fn valid_time(&self) -> DateTime<Utc> {
        self.init_time + Duration::hours(i64::from(self.lead_hours))
    }

    /// Day of year (1..=366) and hour of the valid time.
    pub fn valid_doy_hour(&self) -> (u32, u32) {
        let t = self.valid_time();
        (t.ordinal(), t.hour())
    }
}

/// One 2D variable on a grid; values are row-major with latitude ascending.
#[derive(Debug, Clone)]
pub struct ScalarField {
    grid: Arc<LatLonGrid>,
    values: Vec<f64>,
    meta: FieldMeta,
}

impl ScalarField {
    pub fn new(grid: Arc<LatLonGrid>, values: Vec<f64>, meta: FieldMeta) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidField(format!(
                "{} values for a {}x{} grid",
                values.len(),
                grid.nlat(),
                grid.nlon()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidField(format!("non-finite value at index {i}")));
        }
        Ok(Self { grid, values, meta })
    }

    pub fn from_fn(grid: Arc<LatLonGrid>, meta: FieldMeta, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(grid.len());
        for &lat in grid.lats() {
            for &lon in grid.lons() {
                values.push(f(lat, lon));
            }
        }
        Self::new(grid, values, meta)
    }

    pub fn grid(&self) -> &Arc<LatLonGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn meta(&self) -> &FieldMeta {
        &self.meta
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(self.grid.clone(), values, self.meta.clone())
    }

    pub fn same_grid(&self, other: &ScalarField) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }
}

pub(crate) fn ensure_same_grid(a: &ScalarField, b: &ScalarField) -> Result<()> {
    if a.same_grid(b) {
        Ok(())
    } else {
        Err(Error::GridMismatch)
    }
}

/// Area-weighted global mean of a field.
pub fn area_weighted_mean(field: &ScalarField) -> Result<f64> {
    if field.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidField("non-finite value".into()));
    }
    Ok(weighted_mean(&field.grid, &field.values, None))
}

/// Area-weighted mean of raw grid values, optionally restricted to a mask.
/// Returns NaN when the mask carries no weight.
pub(crate) fn weighted_mean(grid: &LatLonGrid, values: &[f64], mask: Option<&[bool]>) -> f64 {
    let nlon = grid.nlon();
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, w) in grid.row_weights().iter().enumerate() {
        let row = &values[i * nlon..(i + 1) * nlon];
        let (mut s, mut c) = (0.0, 0usize);
        match mask {
            Some(m) => {
                let mrow = &m[i * nlon..(i + 1) * nlon];
                for (v, keep) in row.iter().zip(mrow) {
                    if *keep {
                        s += v;
                        c += 1;
                    }
                }
            }
            None => {
                s = row.iter().sum();
                c = nlon;
            }
        }
        num += w * s;
        den += w * c as f64;
    }
    if den > 0.0 {
        num / den
    } else {
        f64::NAN
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Band {
    Tropics,
    Extratropics,
    Polar,
}

impl Band {
    pub const ALL: [Band; 3] = [Band::Tropics, Band::Extratropics, Band::Polar];

    pub fn of_latitude(lat: f64) -> Band {
        let a = lat.abs();
        if a < 20.0 {
            Band::Tropics
        } else if a < 60.0 {
            Band::Extratropics
        } else {
            Band::Polar
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Band::Tropics => "tropics",
            Band::Extratropics => "extratropics",
            Band::Polar => "polar",
        }
    }
}

/// Point mask for one latitude band: tropics |lat| < 20, extratropics
/// 20 <= |lat| < 60, polar |lat| >= 60.
pub fn band_mask(grid: &LatLonGrid, band: Band) -> Vec<bool> {
    let mut mask = Vec::with_capacity(grid.len());
    for &lat in grid.lats() {
        let keep = Band::of_latitude(lat) == band;
        mask.extend(std::iter::repeat_n(keep, grid.nlon()));
    }
    mask
}
