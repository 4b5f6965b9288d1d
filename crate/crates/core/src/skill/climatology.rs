use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use chrono::Datelike;

use crate::error::{Error, Result};
use crate::grid::{ensure_same_grid, LatLonGrid, ScalarField, Variable};

pub const DAYS: u32 = 366;
pub const HOURS: u32 = 24;
/// Half-width of the day-of-year pooling window (15 days total).
pub const WINDOW_HALF_DAYS: u32 = 7;

#[derive(Debug, Clone, PartialEq)]
pub struct ClimSlot {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

/// Per-point mean and standard deviation for each (day of year, hour).
#[derive(Debug, Clone)]
pub struct Climatology {
    grid: Arc<LatLonGrid>,
    variable: Variable,
    slots: Vec<Option<Arc<ClimSlot>>>,
}

fn slot_index(doy: u32, hour: u32) -> usize {
    ((doy - 1) * HOURS + hour) as usize
}

/// Circular distance between days of year on a 366-day cycle.
fn doy_distance(a: u32, b: u32) -> u32 {
    let d = a.abs_diff(b);
    d.min(DAYS - d)
}

impl Climatology {
    pub fn empty(grid: Arc<LatLonGrid>, variable: Variable) -> Self {
        Self {
            grid,
            variable,
            slots: vec![None; (DAYS * HOURS) as usize],
        }
    }

    /// One slot shared by every day and hour.
    pub fn uniform(grid: Arc<LatLonGrid>, variable: Variable, mu: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        let mut clim = Self::empty(grid, variable);
        clim.set(None, None, mu, sigma)?;
        Ok(clim)
    }

    /// Fills the slot for `(doy, hour)`; `None` broadcasts over that axis.
    /// The variable's sigma floor is applied here.
    pub fn set(&mut self, doy: Option<u32>, hour: Option<u32>, mu: Vec<f64>, mut sigma: Vec<f64>) -> Result<()> {
        let n = self.grid.len();
        if mu.len() != n || sigma.len() != n {
            return Err(Error::InvalidField("climatology slot size does not match grid".into()));
        }
        if mu.iter().chain(&sigma).any(|x| !x.is_finite()) || sigma.iter().any(|s| *s < 0.0) {
            return Err(Error::InvalidField("climatology slot has invalid values".into()));
        }
        let floor = self.variable.sigma_floor();
        for s in &mut sigma {
            *s = s.max(floor);
        }
        let slot = Arc::new(ClimSlot { mu, sigma });
        let days: Vec<u32> = doy.map_or_else(|| (1..=DAYS).collect(), |d| vec![d]);
        let hours: Vec<u32> = hour.map_or_else(|| (0..HOURS).collect(), |h| vec![h]);
        for &d in &days {
            if !(1..=DAYS).contains(&d) {
                return Err(Error::Config(format!("day of year {d}")));
            }
            for &h in &hours {
                if h >= HOURS {
                    return Err(Error::Config(format!("hour {h}")));
                }
                self.slots[slot_index(d, h)] = Some(slot.clone());
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> &Arc<LatLonGrid> {
        &self.grid
    }

    pub fn variable(&self) -> Variable {
        self.variable
    }

    pub fn slot(&self, doy: u32, hour: u32) -> Result<&ClimSlot> {
        if !(1..=DAYS).contains(&doy) || hour >= HOURS {
            return Err(Error::ClimatologyGap { doy, hour });
        }
        self.slots[slot_index(doy, hour)]
            .as_deref()
            .ok_or(Error::ClimatologyGap { doy, hour })
    }

    /// Slot matching a field's valid time.
    pub fn slot_for(&self, field: &ScalarField) -> Result<&ClimSlot> {
        if *field.grid().as_ref() != *self.grid {
            return Err(Error::GridMismatch);
        }
        let (doy, hour) = field.meta().valid_doy_hour();
        self.slot(doy, hour)
    }
}

/// Builds a climatology by pooling every sample whose day of year lies within
/// seven days (wrapping) of the target day. History with a single synoptic
/// hour yields a climatology valid at every hour.
pub fn compute_climatology(history: &[ScalarField]) -> Result<Climatology> {
    let first = history
        .first()
        .ok_or_else(|| Error::InsufficientHistory("empty history".into()))?;
    let variable = first.meta().variable;
    for f in history {
        ensure_same_grid(first, f)?;
        if f.meta().variable != variable {
            return Err(Error::InvalidField("history mixes variables".into()));
        }
    }
    let years: BTreeSet<i32> = history.iter().map(|f| f.meta().valid_time().year()).collect();
    if years.len() < 2 {
        return Err(Error::InsufficientHistory(format!("{} distinct year(s)", years.len())));
    }

    let mut by_hour: BTreeMap<u32, Vec<(u32, &ScalarField)>> = BTreeMap::new();
    for f in history {
        let (doy, hour) = f.meta().valid_doy_hour();
        by_hour.entry(hour).or_default().push((doy, f));
    }
    let single_hour = by_hour.len() == 1;

    let n = first.grid().len();
    let mut clim = Climatology::empty(first.grid().clone(), variable);
    for (&hour, samples) in &by_hour {
        for doy in 1..=DAYS {
            let pool: Vec<&ScalarField> = samples
                .iter()
                .filter(|(d, _)| doy_distance(*d, doy) <= WINDOW_HALF_DAYS)
                .map(|(_, f)| *f)
                .collect();
            if pool.is_empty() {
                return Err(Error::InsufficientHistory(format!("day {doy} hour {hour}")));
            }
            let count = pool.len() as f64;
            let mut mu = vec![0.0; n];
            for f in &pool {
                for (m, v) in mu.iter_mut().zip(f.values()) {
                    *m += v;
                }
            }
            for m in &mut mu {
                *m /= count;
            }
            let mut sigma = vec![0.0; n];
            if pool.len() > 1 {
                for f in &pool {
                    for ((s, v), m) in sigma.iter_mut().zip(f.values()).zip(&mu) {
                        *s += (v - m).powi(2);
                    }
                }
                for s in &mut sigma {
                    *s = (*s / (count - 1.0)).sqrt();
                }
            }
            let hour_key = (!single_hour).then_some(hour);
            clim.set(Some(doy), hour_key, mu, sigma)?;
        }
    }
    Ok(clim)
}
