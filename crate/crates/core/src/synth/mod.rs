//! Seeded synthetic-field generators with known answers: shaped random
//! fields, ensembles with planted conditional variance, phase-shifted waves,
//! balanced states, drifting kinetic energy and planted tail bias.

pub mod dataset;

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use rustfft::num_complex::Complex64;

use crate::balance::{geostrophic_wind, BalanceConfig, PhysicalConstants, LAYER_PRESSURE_RATIO};
use crate::error::{Error, Result};
use crate::grid::{weighted_mean, FieldMeta, LatLonGrid, ScalarField, Variable};
use crate::skill::Climatology;
use crate::spectral::fft::{fft2, Direction, ShellMap};
use crate::spectral::{Spectrum, MIN_ISOTROPIC_SHELLS};

/// Target shell energies `E(k)` for k = 1..=k_max plus the generator seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralRecipe {
    pub energy: Vec<f64>,
    pub seed: u64,
}

impl SpectralRecipe {
    pub fn new(energy: Vec<f64>, seed: u64) -> Result<Self> {
        if let Some(k) = energy.iter().position(|e| !(e.is_finite() && *e >= 0.0)) {
            return Err(Error::InvalidField(format!("recipe shell {} energy {}", k + 1, energy[k])));
        }
        Ok(Self { energy, seed })
    }

    pub fn from_fn(k_max: usize, seed: u64, f: impl Fn(usize) -> f64) -> Result<Self> {
        Self::new((1..=k_max).map(f).collect(), seed)
    }

    /// Power law `scale * k^slope`.
    pub fn power_law(k_max: usize, slope: f64, scale: f64, seed: u64) -> Result<Self> {
        Self::from_fn(k_max, seed, |k| scale * (k as f64).powf(slope))
    }

    pub fn k_max(&self) -> usize {
        self.energy.len()
    }

    pub fn as_spectrum(&self) -> Result<Spectrum> {
        Spectrum::new(self.energy.clone())
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn check_support(grid: &LatLonGrid, k_max: usize) -> Result<ShellMap> {
    let shells = ShellMap::for_grid(grid);
    if !grid.has_uniform_lats() {
        return Err(Error::InvalidGrid("spectra need uniformly spaced latitudes".into()));
    }
    if shells.isotropic_limit < MIN_ISOTROPIC_SHELLS || k_max > shells.max_shell {
        return Err(Error::GridTooCoarse {
            limit: shells.max_shell,
            needed: k_max.max(MIN_ISOTROPIC_SHELLS),
        });
    }
    Ok(shells)
}

/// Raw values whose sqrt(w)-weighted spectrum has expectation `energy`.
fn shaped_values(grid: &LatLonGrid, shells: &ShellMap, energy: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let (nlat, nlon) = (grid.nlat(), grid.nlon());
    let n = grid.len() as f64;
    let mut data: Vec<Complex64> = (0..grid.len())
        .map(|_| Complex64::new(rng.sample(StandardNormal), 0.0))
        .collect();
    fft2(&mut data, nlat, nlon, Direction::Forward);
    // White noise has E|Z|^2 = N per mode; rescale so shell s carries E(s)
    // after the 1/N normalization used by the spectrum.
    for (c, &s) in data.iter_mut().zip(&shells.shell) {
        let target = if s == 0 { 0.0 } else { energy.get(s - 1).copied().unwrap_or(0.0) };
        *c *= (target / (n * shells.counts[s] as f64)).sqrt();
    }
    fft2(&mut data, nlat, nlon, Direction::Inverse);
    let nlon = grid.nlon();
    data.iter()
        .enumerate()
        .map(|(k, c)| {
            let w = grid.row_weights()[k / nlon];
            if w > 0.0 {
                c.re / w.sqrt()
            } else {
                0.0
            }
        })
        .collect()
}

/// Random-phase field whose isotropic spectrum equals `recipe` in
/// expectation. Rows with zero area weight (poles) are set to zero.
pub fn field_with_spectrum(recipe: &SpectralRecipe, grid: Arc<LatLonGrid>, meta: FieldMeta) -> Result<ScalarField> {
    let shells = check_support(&grid, recipe.k_max())?;
    let mut rng = rng_for(recipe.seed, 0);
    let values = shaped_values(&grid, &shells, &recipe.energy, &mut rng);
    ScalarField::new(grid, values, meta)
}

#[derive(Debug, Clone)]
pub struct SyntheticEnsemble {
    /// The planted conditional mean.
    pub mean: ScalarField,
    pub members: Vec<ScalarField>,
}

/// Members are a fixed mean field plus independent Gaussian perturbations
/// whose shell variance is `var_recipe`. The mean uses `mean_recipe.seed`;
/// member `m` draws from stream `m + 1` of `var_recipe.seed`.
pub fn ensemble_with_conditional_variance(
    mean_recipe: &SpectralRecipe,
    var_recipe: &SpectralRecipe,
    members: usize,
    grid: Arc<LatLonGrid>,
    meta: FieldMeta,
) -> Result<SyntheticEnsemble> {
    if members < 2 {
        return Err(Error::InsufficientEnsemble(members));
    }
    let shells = check_support(&grid, mean_recipe.k_max().max(var_recipe.k_max()))?;
    let mean = field_with_spectrum(mean_recipe, grid.clone(), meta.clone())?;
    let members = (0..members as u64)
        .map(|m| {
            let mut rng = rng_for(var_recipe.seed, m + 1);
            let noise = shaped_values(&grid, &shells, &var_recipe.energy, &mut rng);
            let values = mean.values().iter().zip(&noise).map(|(a, b)| a + b).collect();
            ScalarField::new(grid.clone(), values, meta.clone())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SyntheticEnsemble { mean, members })
}

/// `truth = A cos(l0 lon)`, `forecast = A cos(l0 (lon - shift))`, with
/// longitude and shift in radians. Both are uniform in latitude.
pub fn shifted_wave_pair(
    amplitude: f64,
    l0: u32,
    shift: f64,
    grid: Arc<LatLonGrid>,
    meta: FieldMeta,
) -> Result<(ScalarField, ScalarField)> {
    if 2 * l0 as usize >= grid.nlon() {
        return Err(Error::GridTooCoarse {
            limit: grid.nlon() / 2,
            needed: l0 as usize + 1,
        });
    }
    let l0 = f64::from(l0);
    let truth = ScalarField::from_fn(grid.clone(), meta.clone(), |_, lon| amplitude * (l0 * lon.to_radians()).cos())?;
    let forecast = ScalarField::from_fn(grid, meta, |_, lon| amplitude * (l0 * (lon.to_radians() - shift)).cos())?;
    Ok((truth, forecast))
}

/// Unweighted mean squared difference over every grid point.
pub fn zonal_mse(truth: &ScalarField, forecast: &ScalarField) -> Result<f64> {
    crate::grid::ensure_same_grid(truth, forecast)?;
    let n = truth.values().len() as f64;
    Ok(truth
        .values()
        .iter()
        .zip(forecast.values())
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        / n)
}

/// Shape of the smooth height and temperature patterns in a balanced state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BalancedPattern {
    pub z_mean: f64,
    pub z_amplitude: f64,
    pub t_mean: f64,
    pub t_amplitude: f64,
    pub wave: f64,
    /// Zonal phase offset of the waves (radians).
    pub phase: f64,
}

impl Default for BalancedPattern {
    fn default() -> Self {
        Self {
            z_mean: 5600.0,
            z_amplitude: 120.0,
            t_mean: 265.0,
            t_amplitude: 4.0,
            wave: 4.0,
            phase: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BalancedState {
    pub u500: ScalarField,
    pub v500: ScalarField,
    pub u850: ScalarField,
    pub v850: ScalarField,
    pub z500: ScalarField,
    pub z850: ScalarField,
    pub t_layer: ScalarField,
}

fn tagged(meta: &FieldMeta, variable: Variable) -> FieldMeta {
    FieldMeta {
        variable,
        ..meta.clone()
    }
}

/// State built from the diagnostic stencils themselves: winds are the
/// discrete geostrophic wind of each level's height, and z850 follows from
/// z500 and the layer temperature hydrostatically. The shear is therefore
/// in discrete thermal-wind balance. Winds are zero where `|f|` is below the
/// floor.
pub fn balanced_state(
    grid: Arc<LatLonGrid>,
    constants: &PhysicalConstants,
    pattern: &BalancedPattern,
    meta: &FieldMeta,
) -> Result<BalancedState> {
    let p = *pattern;
    let z500 = ScalarField::from_fn(grid.clone(), tagged(meta, Variable::Z500), |lat, lon| {
        let (phi, lam) = (lat.to_radians(), lon.to_radians());
        p.z_mean - 300.0 * phi.sin().powi(2) + p.z_amplitude * phi.cos().powi(2) * phi.sin() * (p.wave * lam + p.phase).cos()
    })?;
    let t_layer = ScalarField::from_fn(grid.clone(), tagged(meta, Variable::T850), |lat, lon| {
        let (phi, lam) = (lat.to_radians(), lon.to_radians());
        p.t_mean - 25.0 * phi.sin().powi(2) + p.t_amplitude * phi.cos() * (p.wave * lam + p.phase + 0.7).sin()
    })?;
    let scale = constants.r_dry * LAYER_PRESSURE_RATIO.ln() / constants.gravity;
    let z850_values = z500
        .values()
        .iter()
        .zip(t_layer.values())
        .map(|(z, t)| z - scale * t)
        .collect();
    let z850 = ScalarField::new(grid.clone(), z850_values, tagged(meta, Variable::Z850))?;

    let wind = |z: &ScalarField, vu: Variable, vv: Variable| -> Result<(ScalarField, ScalarField)> {
        let (u, v) = geostrophic_wind(&grid, z.values(), constants);
        let clean = |x: Vec<f64>| x.into_iter().map(|a| if a.is_finite() { a } else { 0.0 }).collect();
        Ok((
            ScalarField::new(grid.clone(), clean(u), tagged(meta, vu))?,
            ScalarField::new(grid.clone(), clean(v), tagged(meta, vv))?,
        ))
    };
    let (u500, v500) = wind(&z500, Variable::U500, Variable::V500)?;
    let (u850, v850) = wind(&z850, Variable::U850, Variable::V850)?;
    Ok(BalancedState {
        u500,
        v500,
        u850,
        v850,
        z500,
        z850,
        t_layer,
    })
}

/// Adds white Gaussian noise to both wind components so that, over the
/// midlatitude mask, the noise RMS is a fraction `rho` of the RMS of the
/// perturbed wind. Applied to a geostrophic wind this plants `AGR ~ rho`.
pub fn perturb_winds(
    u: &ScalarField,
    v: &ScalarField,
    rho: f64,
    cfg: &BalanceConfig,
    seed: u64,
) -> Result<(ScalarField, ScalarField)> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::Config(format!("noise fraction {rho} outside [0, 1)")));
    }
    crate::grid::ensure_same_grid(u, v)?;
    let grid = u.grid();
    let mask = cfg.midlat_mask(grid);
    let speed2: Vec<f64> = u.values().iter().zip(v.values()).map(|(a, b)| a * a + b * b).collect();
    let ms = weighted_mean(grid, &speed2, Some(&mask));
    if !(ms > 0.0) {
        return Err(Error::DegenerateFlow);
    }
    // |n|^2 = 2 r^2 per point; solve 2r^2 / (ms + 2r^2) = rho^2.
    let r = (rho * rho * ms / (2.0 * (1.0 - rho * rho))).sqrt();
    let mut rng = rng_for(seed, 0);
    let mut noisy = |f: &ScalarField| -> Result<ScalarField> {
        let values = f
            .values()
            .iter()
            .map(|x| x + r * rng.sample::<f64, _>(StandardNormal))
            .collect();
        f.with_values(values)
    };
    Ok((noisy(u)?, noisy(v)?))
}

/// `ratio(lead) = exp(gamma * lead_days)`.
pub fn drifting_ke_series(gamma_per_day: f64, leads_hours: &[u32]) -> BTreeMap<u32, f64> {
    leads_hours
        .iter()
        .map(|&h| (h, (gamma_per_day * f64::from(h) / 24.0).exp()))
        .collect()
}

/// Noise added to the planted forecast bias, in units of the local sigma.
pub const TAIL_NOISE_SIGMAS: f64 = 0.1;
/// Degrees of freedom of the Student-t draw behind the warm tail.
pub const TAIL_DOF: f64 = 5.0;

/// Verification drawn as `mu + sigma * d` with `d` a unit-variance
/// Student-t (heavy warm tail); forecast `= verify - alpha sigma max(0, d - 2)`
/// plus small Gaussian noise. `meta` fixes variable and valid time; the
/// climatology must cover that time.
pub fn planted_tail_bias(clim: &Climatology, alpha: f64, meta: FieldMeta, seed: u64) -> Result<(ScalarField, ScalarField)> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::Config(format!("attenuation {alpha} must be nonnegative")));
    }
    let grid = clim.grid().clone();
    let (doy, hour) = meta.valid_doy_hour();
    let slot = clim.slot(doy, hour)?;
    let t = StudentT::new(TAIL_DOF).map_err(|e| Error::Config(e.to_string()))?;
    let unit = ((TAIL_DOF - 2.0) / TAIL_DOF).sqrt();
    let mut rng = rng_for(seed, 0);
    let mut verify = Vec::with_capacity(grid.len());
    let mut forecast = Vec::with_capacity(grid.len());
    for (mu, sigma) in slot.mu.iter().zip(&slot.sigma) {
        let d = unit * t.sample(&mut rng);
        let noise: f64 = rng.sample(StandardNormal);
        let v = mu + sigma * d;
        verify.push(v);
        forecast.push(v - alpha * sigma * (d - 2.0).max(0.0) + TAIL_NOISE_SIGMAS * sigma * noise);
    }
    Ok((
        ScalarField::new(grid.clone(), forecast, meta.clone())?,
        ScalarField::new(grid, verify, meta)?,
    ))
}

/// Default oracle grid: 96 x 192, cell-centred rows (no pole rows).
pub fn oracle_grid() -> Arc<LatLonGrid> {
    Arc::new(LatLonGrid::regular(96, 192, false).expect("static grid is valid"))
}

#[cfg(test)]
mod tests;
