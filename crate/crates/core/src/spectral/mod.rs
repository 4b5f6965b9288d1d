//! Latitude-weighted isotropic FFT spectra and the metrics derived from them.
//!
//! A field has its area-weighted mean removed, is multiplied by `sqrt(w)`
//! (w the normalized cos-latitude weight), and is transformed with a 2D DFT normalized by the
//! number of points. Squared coefficient magnitudes are summed into integer
//! shells `k = round(sqrt(kx^2 + ky^2))`, with `kx`, `ky` counted in cycles per
//! domain along longitude and latitude. Every shell out to the grid corner is
//! kept, so the shell energies sum to the weighted field variance; shells
//! above `isotropic_limit` are partial rings.

pub(crate) mod fft;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{LatLonGrid, ScalarField};
use fft::{fft2, Direction, ShellMap};

/// Smallest number of complete shells a grid must resolve.
pub const MIN_ISOTROPIC_SHELLS: usize = 8;
/// Highest shell scored by the fidelity index.
pub const SFI_MAX_SHELL: usize = 200;
/// Shell at which the normalized effective resolution saturates.
pub const EFFECTIVE_RESOLUTION_SCALE: f64 = 300.0;
pub const HALF_POWER: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    /// Energy of shell k at index k - 1.
    energy: Vec<f64>,
    /// Last shell whose ring is complete on the source grid.
    isotropic_limit: usize,
}

impl Spectrum {
    pub fn new(energy: Vec<f64>) -> Result<Self> {
        let limit = energy.len();
        Self::with_limit(energy, limit)
    }

    pub fn with_limit(energy: Vec<f64>, isotropic_limit: usize) -> Result<Self> {
        if energy.is_empty() {
            return Err(Error::InsufficientSpectrum);
        }
        if let Some(k) = energy.iter().position(|e| !(e.is_finite() && *e >= 0.0)) {
            return Err(Error::InvalidField(format!("shell {} energy {}", k + 1, energy[k])));
        }
        Ok(Self {
            isotropic_limit: isotropic_limit.min(energy.len()),
            energy,
        })
    }

    /// Builds a spectrum from `E(k)` evaluated at k = 1..=k_max.
    pub fn from_fn(k_max: usize, f: impl Fn(usize) -> f64) -> Result<Self> {
        Self::new((1..=k_max).map(f).collect())
    }

    pub fn k_max(&self) -> usize {
        self.energy.len()
    }

    pub fn isotropic_limit(&self) -> usize {
        self.isotropic_limit
    }

    /// Energy at shell `k` (1-based). Panics if `k` is out of range.
    pub fn energy(&self, k: usize) -> f64 {
        self.energy[k - 1]
    }

    pub fn energies(&self) -> &[f64] {
        &self.energy
    }

    pub fn total(&self) -> f64 {
        self.energy.iter().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.energy.iter().enumerate().map(|(i, e)| (i + 1, *e))
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::with_limit(self.energy.iter().map(|e| e * factor).collect(), self.isotropic_limit)
    }

    /// Shells scored by the fidelity metrics: complete rings on both grids.
    fn scored_shells(&self, other: &Spectrum) -> usize {
        self.isotropic_limit.min(other.isotropic_limit)
    }

    fn check_support(&self, other: &Spectrum) -> Result<()> {
        if self.k_max() != other.k_max() {
            return Err(Error::ShellMismatch {
                left: self.k_max(),
                right: other.k_max(),
            });
        }
        Ok(())
    }
}

/// Energy-weighted average of spectra sharing one support.
pub fn mean_spectrum(spectra: &[Spectrum]) -> Result<Spectrum> {
    let first = spectra.first().ok_or(Error::InsufficientSpectrum)?;
    let mut acc = vec![0.0; first.k_max()];
    for s in spectra {
        first.check_support(s)?;
        for (a, e) in acc.iter_mut().zip(s.energies()) {
            *a += e;
        }
    }
    let n = spectra.len() as f64;
    Spectrum::with_limit(acc.into_iter().map(|a| a / n).collect(), first.isotropic_limit)
}

fn check_grid(grid: &LatLonGrid) -> Result<()> {
    if !grid.has_uniform_lats() {
        return Err(Error::InvalidGrid("spectra need uniformly spaced latitudes".into()));
    }
    let limit = grid.nlat().min(grid.nlon()) / 2;
    if limit < MIN_ISOTROPIC_SHELLS {
        return Err(Error::GridTooCoarse {
            limit,
            needed: MIN_ISOTROPIC_SHELLS,
        });
    }
    Ok(())
}

/// Area-weighted anomaly multiplied by sqrt(w). The plain mean of the result
/// is also removed; it only feeds shell 0, which is never reported.
pub(crate) fn weighted_anomaly(grid: &LatLonGrid, values: &[f64]) -> Vec<f64> {
    let nlon = grid.nlon();
    let wmean = crate::grid::weighted_mean(grid, values, None);
    let mut g = Vec::with_capacity(values.len());
    for (i, w) in grid.row_weights().iter().enumerate() {
        let s = w.sqrt();
        g.extend(values[i * nlon..(i + 1) * nlon].iter().map(|v| s * (v - wmean)));
    }
    let mean = g.iter().sum::<f64>() / g.len() as f64;
    for x in &mut g {
        *x -= mean;
    }
    g
}

/// Normalized 2D DFT coefficients of the weighted anomaly.
pub(crate) fn weighted_coefficients(grid: &LatLonGrid, values: &[f64]) -> Vec<Complex64> {
    let n = values.len() as f64;
    let mut data: Vec<Complex64> = weighted_anomaly(grid, values)
        .into_iter()
        .map(|x| Complex64::new(x, 0.0))
        .collect();
    fft2(&mut data, grid.nlat(), grid.nlon(), Direction::Forward);
    for c in &mut data {
        *c /= n;
    }
    data
}

pub fn isotropic_spectrum(field: &ScalarField) -> Result<Spectrum> {
    let grid = field.grid();
    check_grid(grid)?;
    let shells = ShellMap::for_grid(grid);
    let coeffs = weighted_coefficients(grid, field.values());
    Spectrum::with_limit(shells.bin_power(&coeffs), shells.isotropic_limit)
}

/// Per-shell ratio `E_f / E_a`; `None` where the verification energy is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralRatio {
    pub ratio: Vec<Option<f64>>,
}

impl SpectralRatio {
    pub fn get(&self, k: usize) -> Option<f64> {
        self.ratio.get(k.wrapping_sub(1)).copied().flatten()
    }

    /// Shells excluded because the verification energy vanished.
    pub fn flagged(&self) -> Vec<usize> {
        self.ratio
            .iter()
            .enumerate()
            .filter(|(_, r)| r.is_none())
            .map(|(i, _)| i + 1)
            .collect()
    }
}

pub fn spectral_ratio(forecast: &Spectrum, verify: &Spectrum) -> Result<SpectralRatio> {
    forecast.check_support(verify)?;
    let ratio = forecast
        .energies()
        .iter()
        .zip(verify.energies())
        .map(|(f, a)| (*a > 0.0).then(|| f / a))
        .collect();
    Ok(SpectralRatio { ratio })
}

/// `1 - mean(|log10 r|) / 2` over the given ratios, clamped to [0, 1].
fn fidelity_from_ratios(ratios: impl Iterator<Item = f64>) -> Result<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for r in ratios {
        sum += r.log10().abs();
        n += 1;
    }
    if n == 0 {
        return Err(Error::InsufficientSpectrum);
    }
    Ok((1.0 - 0.5 * sum / n as f64).clamp(0.0, 1.0))
}

/// Spectral Fidelity Index over shells 1..=200 where both energies are
/// positive. Shells past the isotropic limit are incomplete rings whose
/// energy is dominated by the grid's corners, so they are not scored.
pub fn sfi(forecast: &Spectrum, verify: &Spectrum) -> Result<f64> {
    forecast.check_support(verify)?;
    let ratios = forecast
        .energies()
        .iter()
        .zip(verify.energies())
        .take(SFI_MAX_SHELL.min(forecast.scored_shells(verify)))
        .filter(|(f, a)| **f > 0.0 && **a > 0.0)
        .map(|(f, a)| f / a);
    fidelity_from_ratios(ratios)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveResolution {
    /// Highest shell with `E_f / E_a >= 0.5`, 0 if none.
    pub shell: usize,
    /// `min(1, shell / 300)`.
    pub normalized: f64,
}

/// Effective resolution. Takes the literal maximum over qualifying shells
/// up to the isotropic limit, so a spectrum that dips below half power and
/// recovers still counts the recovery.
pub fn effective_resolution(forecast: &Spectrum, verify: &Spectrum) -> Result<EffectiveResolution> {
    let ratio = spectral_ratio(forecast, verify)?;
    if ratio.ratio.iter().all(Option::is_none) {
        return Err(Error::InsufficientSpectrum);
    }
    let shell = ratio
        .ratio
        .iter()
        .enumerate()
        .take(forecast.scored_shells(verify))
        .filter(|(_, r)| r.is_some_and(|r| r >= HALF_POWER))
        .map(|(i, _)| i + 1)
        .max()
        .unwrap_or(0);
    Ok(EffectiveResolution {
        shell,
        normalized: (shell as f64 / EFFECTIVE_RESOLUTION_SCALE).min(1.0),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLawFit {
    pub slope: f64,
    /// Intercept of `ln E` at `ln k = 0`.
    pub intercept: f64,
    pub r2: f64,
}

/// Least-squares fit of `ln E(k)` against `ln k` over `[k_lo, k_hi]`.
pub fn fit_power_law(spectrum: &Spectrum, k_lo: usize, k_hi: usize) -> Result<PowerLawFit> {
    if k_lo < 1 || k_hi <= k_lo || k_hi > spectrum.k_max() {
        return Err(Error::InvalidRange { lo: k_lo, hi: k_hi });
    }
    let mut xs = Vec::with_capacity(k_hi - k_lo + 1);
    let mut ys = Vec::with_capacity(k_hi - k_lo + 1);
    for k in k_lo..=k_hi {
        let e = spectrum.energy(k);
        if e <= 0.0 {
            return Err(Error::NonpositiveEnergy(k));
        }
        xs.push((k as f64).ln());
        ys.push(e.ln());
    }
    let line = crate::stats::linear_fit(&xs, &ys, None).ok_or(Error::InvalidRange { lo: k_lo, hi: k_hi })?;
    Ok(PowerLawFit {
        slope: line.slope,
        intercept: line.intercept,
        r2: line.r2,
    })
}

/// Shell-binned spread of ensemble members about their mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalVarianceSpectrum {
    /// Variance at shell k stored at index k - 1.
    pub variance: Vec<f64>,
    pub lead_hours: u32,
}

impl ConditionalVarianceSpectrum {
    pub fn new(variance: Vec<f64>, lead_hours: u32) -> Result<Self> {
        if variance.is_empty() {
            return Err(Error::InsufficientSpectrum);
        }
        if let Some(k) = variance.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidField(format!("shell {} variance {}", k + 1, variance[k])));
        }
        Ok(Self { variance, lead_hours })
    }

    pub fn k_max(&self) -> usize {
        self.variance.len()
    }

    pub fn get(&self, k: usize) -> f64 {
        self.variance[k - 1]
    }
}

/// Unbiased (M - 1 denominator) variance of member DFT coefficients about
/// the ensemble-mean coefficients, summed per shell.
pub fn conditional_variance_spectrum(ensemble: &[ScalarField]) -> Result<ConditionalVarianceSpectrum> {
    if ensemble.len() < 2 {
        return Err(Error::InsufficientEnsemble(ensemble.len()));
    }
    let first = &ensemble[0];
    for m in &ensemble[1..] {
        crate::grid::ensure_same_grid(first, m)?;
        if m.meta().valid_time() != first.meta().valid_time() {
            return Err(Error::InvalidField("ensemble members have different valid times".into()));
        }
    }
    let grid = first.grid();
    check_grid(grid)?;
    let shells = ShellMap::for_grid(grid);

    let coeffs: Vec<Vec<Complex64>> = ensemble
        .iter()
        .map(|m| weighted_coefficients(grid, m.values()))
        .collect();
    let m = coeffs.len() as f64;
    let mut mean = vec![Complex64::new(0.0, 0.0); grid.len()];
    for c in &coeffs {
        for (a, x) in mean.iter_mut().zip(c) {
            *a += x;
        }
    }
    for a in &mut mean {
        *a /= m;
    }
    let mut variance = vec![0.0; shells.max_shell];
    for c in &coeffs {
        for ((x, mu), &s) in c.iter().zip(&mean).zip(&shells.shell) {
            if s > 0 {
                variance[s - 1] += (x - mu).norm_sqr();
            }
        }
    }
    for v in &mut variance {
        *v /= m - 1.0;
    }
    ConditionalVarianceSpectrum::new(variance, first.meta().lead_hours)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossFamily {
    Mse,
    Crps,
    Score,
}

/// Pre-training fidelity forecast for a loss family. For MSE the predicted
/// ratio is `1 - Var_k / E_k`; CRPS preserves energy; score matching adds
/// sampling noise `1 + s_k / E_k`.
pub fn predicted_sfi(
    loss: LossFamily,
    var_spec: &ConditionalVarianceSpectrum,
    truth: &Spectrum,
    sample_noise: Option<&Spectrum>,
) -> Result<f64> {
    if var_spec.k_max() != truth.k_max() {
        return Err(Error::ShellMismatch {
            left: var_spec.k_max(),
            right: truth.k_max(),
        });
    }
    let shells = 1..=truth.isotropic_limit().min(SFI_MAX_SHELL);
    match loss {
        LossFamily::Crps => Ok(1.0),
        LossFamily::Mse => {
            for (k, e) in truth.iter() {
                let v = var_spec.get(k);
                if v > e * (1.0 + 1e-12) {
                    return Err(Error::InconsistentVariance { k, variance: v, energy: e });
                }
            }
            let ratios = shells
                .filter(|&k| truth.energy(k) > 0.0)
                .map(|k| 1.0 - var_spec.get(k) / truth.energy(k))
                .filter(|r| *r > 0.0);
            fidelity_from_ratios(ratios)
        }
        LossFamily::Score => {
            let noise = sample_noise.ok_or(Error::MissingSampleNoise)?;
            truth.check_support(noise)?;
            let ratios = shells
                .filter(|&k| truth.energy(k) > 0.0)
                .map(|k| 1.0 + noise.energy(k) / truth.energy(k));
            fidelity_from_ratios(ratios)
        }
    }
}

#[cfg(test)]
mod tests;
