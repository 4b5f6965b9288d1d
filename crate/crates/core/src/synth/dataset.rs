//! Writes a complete synthetic dataset for end-to-end pipeline runs: WXG1
//! fields, forecast/verification manifests, a climatology index and a run
//! config, all relative to one directory.
//!
//! Truth at each valid time is a balanced state whose waves drift eastward,
//! plus a heavy-tailed 2 m temperature. Each model adds its own signature:
//! growing height errors, zonally smoothed and noisy winds, kinetic-energy
//! drift and attenuated warm extremes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Duration, TimeZone, Utc};

use super::{balanced_state, field_with_spectrum, perturb_winds, planted_tail_bias, BalancedPattern, SpectralRecipe};
use crate::balance::{geostrophic_wind, BalanceConfig, PhysicalConstants, LAYER_PRESSURE_RATIO};
use crate::error::{Error, Result};
use crate::grid::{FieldMeta, LatLonGrid, ModelMeta, ScalarField, Variable};
use crate::io::manifest::{write_json, ClimatologyEntry, ManifestEntry};
use crate::io::wxg1;
use crate::pipeline::{CoverageRange, RunConfig};
use crate::skill::Climatology;

/// Per-model error signature.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub name: String,
    pub family: Option<String>,
    pub loss: String,
    /// Height-error amplitude at lead 0 (m).
    pub initial_error: f64,
    /// Error growth rate (per day).
    pub growth_per_day: f64,
    /// Passes of a 1-2-1 zonal filter over the winds.
    pub smoothing_passes: usize,
    /// Ageostrophic noise fraction added to the winds.
    pub wind_noise: f64,
    /// Kinetic-energy drift rate (per day).
    pub ke_drift_per_day: f64,
    /// Warm-tail bias slope reached at the longest lead, in kelvin of bias
    /// per climatological sigma of exceedance.
    pub tail_alpha: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub nlat: usize,
    pub nlon: usize,
    pub models: Vec<ModelSpec>,
    pub first_init: DateTime<Utc>,
    pub inits: usize,
    pub init_step_hours: u32,
    pub leads: Vec<u32>,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        let model = |name: &str, family: &str, loss: &str, growth, passes, noise, drift, alpha| ModelSpec {
            name: name.into(),
            family: Some(family.into()),
            loss: loss.into(),
            initial_error: 5.0,
            growth_per_day: growth,
            smoothing_passes: passes,
            wind_noise: noise,
            ke_drift_per_day: drift,
            tail_alpha: alpha,
        };
        Self {
            nlat: 32,
            nlon: 64,
            models: vec![
                model("alpha", "graph", "mse", 0.45, 2, 0.05, -0.01, 0.28),
                model("beta", "graph", "mse", 0.40, 3, 0.10, -0.02, 0.20),
                model("gamma", "transformer", "crps", 0.35, 0, 0.03, 0.0, 0.05),
            ],
            first_init: Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).single().expect("valid date"),
            inits: 2,
            init_step_hours: 24,
            leads: vec![0, 24, 48, 72, 96, 120],
            seed: 0,
        }
    }
}

/// Paths of a written dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub root: PathBuf,
    pub forecast_manifest: PathBuf,
    pub verification_manifest: PathBuf,
    pub climatology_index: PathBuf,
    pub config: PathBuf,
}

/// Variables every model writes.
pub const DATASET_VARIABLES: [Variable; 9] = [
    Variable::Z500,
    Variable::Z850,
    Variable::T850,
    Variable::T500,
    Variable::U500,
    Variable::V500,
    Variable::U850,
    Variable::V850,
    Variable::T2m,
];

/// Offset between the layer temperature and t850 / t500 (K); their mean
/// stays the layer temperature.
const LEVEL_OFFSET_K: f64 = 12.0;
/// Period of the eastward wave drift (hours).
const DRIFT_PERIOD_HOURS: f64 = 192.0;
/// RMS of the balanced k^-3 eddies added to the truth heights (m).
const EDDY_RMS_M: f64 = 40.0;
/// Temperature error per metre of height error.
const T_ERROR_PER_M: f64 = 0.02;
const Z500_CLIM_SIGMA: f64 = 60.0;
const T2M_CLIM_SIGMA: f64 = 3.0;
const T2M_MODEL_NOISE_K: f64 = 0.1;

// splitmix64 finalizer: decorrelates the small integers used as seed tags.
fn mix(seed: u64, tags: &[u64]) -> u64 {
    let mut x = seed;
    for t in tags {
        x = x.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(*t);
        x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        x ^= x >> 31;
    }
    x
}

fn stamp(t: DateTime<Utc>) -> String {
    t.format("%Y%m%dT%H").to_string()
}

fn zonal_smooth(field: &ScalarField, passes: usize) -> Result<ScalarField> {
    let grid = field.grid();
    let (nlat, nlon) = (grid.nlat(), grid.nlon());
    let mut v = field.values().to_vec();
    for _ in 0..passes {
        let prev = v.clone();
        for i in 0..nlat {
            for j in 0..nlon {
                let w = prev[grid.index(i, (j + nlon - 1) % nlon)];
                let e = prev[grid.index(i, (j + 1) % nlon)];
                v[grid.index(i, j)] = 0.25 * w + 0.5 * prev[grid.index(i, j)] + 0.25 * e;
            }
        }
    }
    field.with_values(v)
}

fn scaled(field: &ScalarField, factor: f64) -> Result<ScalarField> {
    field.with_values(field.values().iter().map(|x| x * factor).collect())
}

fn shifted(field: &ScalarField, offset: f64, meta: &FieldMeta, variable: Variable) -> Result<ScalarField> {
    let values = field.values().iter().map(|x| x + offset).collect();
    ScalarField::new(
        field.grid().clone(),
        values,
        FieldMeta {
            variable,
            ..meta.clone()
        },
    )
}

struct Writer {
    root: PathBuf,
}

impl Writer {
    fn put(&self, rel: PathBuf, field: &ScalarField) -> Result<PathBuf> {
        let path = self.root.join(&rel);
        if let Some(p) = path.parent() {
            std::fs::create_dir_all(p).map_err(|e| Error::io(p, e))?;
        }
        wxg1::write_field(&path, field)?;
        Ok(rel)
    }
}

fn plus(a: &ScalarField, b: &[f64], factor: f64) -> Result<ScalarField> {
    a.with_values(a.values().iter().zip(b).map(|(x, y)| x + factor * y).collect())
}

/// Random field with a k^-3 shell spectrum and the given RMS.
fn k3_field(grid: &Arc<LatLonGrid>, rms: f64, seed: u64, meta: FieldMeta) -> Result<ScalarField> {
    let k_max = grid.nlat().min(grid.nlon()) / 2;
    let norm: f64 = (1..=k_max).map(|k| (k as f64).powi(-3)).sum();
    let recipe = SpectralRecipe::power_law(k_max, -3.0, rms * rms / norm, seed)?;
    field_with_spectrum(&recipe, grid.clone(), meta)
}

/// Truth for the balanced variables at phase zero: the wave pattern plus
/// k^-3 height eddies shared by both levels, with winds rederived
/// geostrophically so the state stays in balance.
fn base_truth(grid: &Arc<LatLonGrid>, constants: &PhysicalConstants, seed: u64) -> Result<BTreeMap<Variable, ScalarField>> {
    let meta = FieldMeta::new(Variable::Z500, "truth", DateTime::<Utc>::UNIX_EPOCH, 0);
    let s = balanced_state(grid.clone(), constants, &BalancedPattern::default(), &meta)?;
    let eddy = k3_field(grid, EDDY_RMS_M, mix(seed, &[3]), meta.clone())?;
    let z500 = plus(&s.z500, eddy.values(), 1.0)?;
    let z850 = plus(&s.z850, eddy.values(), 1.0)?;
    let mut out = BTreeMap::new();
    for (z, vu, vv) in [(&z500, Variable::U500, Variable::V500), (&z850, Variable::U850, Variable::V850)] {
        let (u, v) = geostrophic_wind(grid, z.values(), constants);
        let clean = |x: Vec<f64>| x.into_iter().map(|a| if a.is_finite() { a } else { 0.0 }).collect();
        out.insert(vu, ScalarField::new(grid.clone(), clean(u), FieldMeta { variable: vu, ..meta.clone() })?);
        out.insert(vv, ScalarField::new(grid.clone(), clean(v), FieldMeta { variable: vv, ..meta.clone() })?);
    }
    out.insert(Variable::T850, shifted(&s.t_layer, LEVEL_OFFSET_K, &meta, Variable::T850)?);
    out.insert(Variable::T500, shifted(&s.t_layer, -LEVEL_OFFSET_K, &meta, Variable::T500)?);
    out.insert(Variable::Z500, z500);
    out.insert(Variable::Z850, z850);
    Ok(out)
}

/// The base truth moved eastward by whole grid columns, so every valid time
/// has exactly the same spectra, energy and balance.
fn truth_at(
    base: &BTreeMap<Variable, ScalarField>,
    spec: &DatasetSpec,
    valid: DateTime<Utc>,
) -> Result<BTreeMap<Variable, ScalarField>> {
    let hours = (valid - spec.first_init).num_hours() as f64;
    let nlon = spec.nlon;
    let shift = ((hours / DRIFT_PERIOD_HOURS * nlon as f64).round() as i64).rem_euclid(nlon as i64) as usize;
    base.iter()
        .map(|(var, f)| {
            let values = f
                .values()
                .chunks(nlon)
                .flat_map(|row| (0..nlon).map(move |j| row[(j + nlon - shift) % nlon]))
                .collect();
            let meta = FieldMeta::new(*var, "truth", valid, 0);
            Ok((*var, ScalarField::new(f.grid().clone(), values, meta)?))
        })
        .collect()
}

fn t2m_climatology(grid: &Arc<LatLonGrid>) -> Result<Climatology> {
    let mu: Vec<f64> = (0..grid.nlat())
        .flat_map(|i| {
            let phi = grid.lats()[i].to_radians();
            std::iter::repeat_n(288.0 - 30.0 * phi.sin().powi(2), grid.nlon())
        })
        .collect();
    let sigma = vec![T2M_CLIM_SIGMA; grid.len()];
    Climatology::uniform(grid.clone(), Variable::T2m, mu, sigma)
}

fn z500_climatology(grid: &Arc<LatLonGrid>) -> Result<Climatology> {
    let z_mean = BalancedPattern::default().z_mean;
    let mu: Vec<f64> = (0..grid.nlat())
        .flat_map(|i| {
            let phi = grid.lats()[i].to_radians();
            std::iter::repeat_n(z_mean - 300.0 * phi.sin().powi(2), grid.nlon())
        })
        .collect();
    Climatology::uniform(grid.clone(), Variable::Z500, mu, vec![Z500_CLIM_SIGMA; grid.len()])
}

/// Writes the dataset under `root` and returns its manifest/config paths.
/// The output is a pure function of `spec`.
pub fn write_dataset(root: &Path, spec: &DatasetSpec) -> Result<Dataset> {
    if spec.models.is_empty() || spec.inits == 0 || spec.leads.is_empty() {
        return Err(Error::Config("synthetic dataset needs models, inits and leads".into()));
    }
    let grid = Arc::new(LatLonGrid::regular(spec.nlat, spec.nlon, false)?);
    let constants = PhysicalConstants::default();
    let balance = BalanceConfig::default();
    let writer = Writer { root: root.to_path_buf() };
    let t2m_clim = t2m_climatology(&grid)?;
    let z500_clim = z500_climatology(&grid)?;
    let base = base_truth(&grid, &constants, spec.seed)?;
    let max_lead = f64::from(*spec.leads.iter().max().expect("nonempty"));

    let mut climatology = Vec::new();
    for (var, clim) in [(Variable::T2m, &t2m_clim), (Variable::Z500, &z500_clim)] {
        let slot = clim.slot(1, 0)?;
        let mu = writer.put(
            PathBuf::from(format!("clim/{var}_mu.wxg1")),
            &ScalarField::new(grid.clone(), slot.mu.clone(), FieldMeta::new(var, "clim", spec.first_init, 0))?,
        )?;
        let sigma = writer.put(
            PathBuf::from(format!("clim/{var}_sigma.wxg1")),
            &ScalarField::new(grid.clone(), slot.sigma.clone(), FieldMeta::new(var, "clim", spec.first_init, 0))?,
        )?;
        climatology.push(ClimatologyEntry {
            variable: var,
            doy: None,
            hour: None,
            mu,
            sigma,
        });
    }

    let mut forecasts = Vec::new();
    let mut verification: BTreeMap<(Variable, DateTime<Utc>), PathBuf> = BTreeMap::new();
    for i in 0..spec.inits {
        let init = spec.first_init + Duration::hours(i64::from(spec.init_step_hours) * i as i64);
        for &lead in &spec.leads {
            let valid = init + Duration::hours(i64::from(lead));
            let truth = truth_at(&base, spec, valid)?;
            let valid_seed = mix(spec.seed, &[1, valid.timestamp() as u64]);
            // Same seed for every model: identical verification draws.
            let t2m_meta = FieldMeta::new(Variable::T2m, "truth", valid, 0);
            let (_, t2m_truth) = planted_tail_bias(&t2m_clim, 0.0, t2m_meta, valid_seed)?;

            if !verification.contains_key(&(Variable::Z500, valid)) {
                for (var, field) in truth.iter().chain([(&Variable::T2m, &t2m_truth)]) {
                    let rel = writer.put(PathBuf::from(format!("truth/{var}/{}.wxg1", stamp(valid))), field)?;
                    verification.insert((*var, valid), rel);
                }
            }

            let days = f64::from(lead) / 24.0;
            for (mi, m) in spec.models.iter().enumerate() {
                let tag = |what: u64| mix(spec.seed, &[2, mi as u64, i as u64, u64::from(lead), what]);
                let meta = |var| FieldMeta::new(var, &m.name, init, lead);
                let mut fields: BTreeMap<Variable, ScalarField> = BTreeMap::new();

                // Heights: k^-3 error with exponentially growing amplitude.
                // A proportional layer-temperature error enters z850
                // hydrostatically so the thickness stays consistent.
                let amp = m.initial_error * (m.growth_per_day * days).exp();
                let z_err = k3_field(&grid, amp, tag(0), meta(Variable::Z500))?;
                let t_err = k3_field(&grid, T_ERROR_PER_M * amp, tag(3), meta(Variable::T850))?;
                let thickness = constants.r_dry * LAYER_PRESSURE_RATIO.ln() / constants.gravity;
                let z850 = plus(&truth[&Variable::Z850], z_err.values(), 1.0)?;
                fields.insert(Variable::Z500, plus(&truth[&Variable::Z500], z_err.values(), 1.0)?);
                fields.insert(Variable::Z850, plus(&z850, t_err.values(), -thickness)?);
                fields.insert(Variable::T850, plus(&truth[&Variable::T850], t_err.values(), 1.0)?);
                fields.insert(Variable::T500, plus(&truth[&Variable::T500], t_err.values(), 1.0)?);

                // Winds: smoothed, energy drifting as exp(gamma t), plus
                // ageostrophic noise.
                let ke_scale = (0.5 * m.ke_drift_per_day * days).exp();
                for (k, (vu, vv)) in [(Variable::U500, Variable::V500), (Variable::U850, Variable::V850)]
                    .into_iter()
                    .enumerate()
                {
                    let u = scaled(&zonal_smooth(&truth[&vu], m.smoothing_passes)?, ke_scale)?;
                    let v = scaled(&zonal_smooth(&truth[&vv], m.smoothing_passes)?, ke_scale)?;
                    let (u, v) = if m.wind_noise > 0.0 {
                        perturb_winds(&u, &v, m.wind_noise, &balance, tag(1 + k as u64))?
                    } else {
                        (u, v)
                    };
                    fields.insert(vu, u);
                    fields.insert(vv, v);
                }

                let alpha = m.tail_alpha * (f64::from(lead) / max_lead).min(1.0);
                let (t2m, _) = planted_tail_bias(&t2m_clim, alpha / T2M_CLIM_SIGMA, meta(Variable::T2m), valid_seed)?;
                // The tail draw's noise is shared across models; add some
                // that is not.
                let own = k3_field(&grid, T2M_MODEL_NOISE_K, tag(4), meta(Variable::T2m))?;
                fields.insert(Variable::T2m, plus(&t2m, own.values(), 1.0)?);

                for (var, field) in &fields {
                    let rel = PathBuf::from(format!("{}/{var}/{}_{lead:03}.wxg1", m.name, stamp(init)));
                    let rel = writer.put(rel, field)?;
                    forecasts.push(ManifestEntry {
                        model: m.name.clone(),
                        variable: *var,
                        init_time: init,
                        lead_hours: lead,
                        path: rel,
                    });
                }
            }
        }
    }

    let verification: Vec<ManifestEntry> = verification
        .into_iter()
        .map(|((variable, valid), path)| ManifestEntry {
            model: "truth".into(),
            variable,
            init_time: valid,
            lead_hours: 0,
            path,
        })
        .collect();
    let out = Dataset {
        root: root.to_path_buf(),
        forecast_manifest: root.join("forecast.json"),
        verification_manifest: root.join("verification.json"),
        climatology_index: root.join("climatology.json"),
        config: root.join("config.json"),
    };
    write_json(&out.forecast_manifest, &forecasts)?;
    write_json(&out.verification_manifest, &verification)?;
    write_json(&out.climatology_index, &climatology)?;

    let mut config = RunConfig::new("forecast.json", "verification.json");
    config.climatology_index = Some(PathBuf::from("climatology.json"));
    config.out_dir = PathBuf::from("out");
    config.seed = spec.seed;
    for m in &spec.models {
        config.model_meta.insert(
            m.name.clone(),
            ModelMeta {
                family: m.family.clone(),
                loss: Some(m.loss.clone()),
            },
        );
    }
    config.diagnostics.sfs.i0 = Some(20.0);
    config.diagnostics.sfs.coverage = vec![CoverageRange {
        variable: Variable::T2m,
        train_min: 250.0,
        train_max: 300.0,
    }];
    write_json(&out.config, &config)?;
    Ok(out)
}
