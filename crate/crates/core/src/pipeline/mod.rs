//! Batch pipeline: loads manifests, runs the selected diagnostics over
//! (model, init, lead, variable) cells on a worker pool and writes
//! deterministic CSV/JSON reports.
//!
//! Cells are mapped in parallel but every reduction runs afterwards in the
//! sorted order of the forecast index, so the worker count never changes a
//! number. A cell that cannot be computed is skipped, logged and listed in
//! `skipped.csv`; only structural problems (unreadable config or manifests)
//! abort a run.

mod config;
mod hmas;
pub mod report;
mod stages;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{FieldMeta, ForecastKey, ForecastSet, ScalarField, Variable};
use crate::io::manifest::{build_forecast_set, read_climatology_index, read_manifest};
use crate::io::wxg1;
use crate::skill::Climatology;

pub use config::{CoverageRange, DiagnosticsConfig, Metric, RunConfig, SfsConfig};
pub use hmas::{build_hmas_tables, write_hmas_reports, HmasCell, HmasRow, HmasTable};
pub use report::Table;

/// Variables the balance diagnostics read (t500 is optional).
pub const BALANCE_VARIABLES: [Variable; 7] = [
    Variable::U500,
    Variable::V500,
    Variable::U850,
    Variable::V850,
    Variable::Z500,
    Variable::Z850,
    Variable::T850,
];

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Finding {
    pub message: String,
}

impl Finding {
    fn new(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
        }
    }
}

/// A cell or group the pipeline could not compute.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Skip {
    pub stage: Metric,
    pub cell: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct RunSummary {
    pub written: Vec<PathBuf>,
    pub skipped: Vec<Skip>,
}

pub(crate) fn cell_label(key: &ForecastKey) -> String {
    format!(
        "{}/{}/{}/+{}h",
        key.model,
        key.variable,
        key.init_time.format("%Y-%m-%dT%H:%MZ"),
        key.lead_hours
    )
}

/// Loaded manifests and climatologies plus the resolved selection.
pub struct Context {
    pub config: RunConfig,
    set: ForecastSet,
    climatologies: BTreeMap<Variable, Climatology>,
    models: Vec<String>,
    variables: Vec<Variable>,
    leads: Vec<u32>,
    pool: rayon::ThreadPool,
}

fn load_climatologies(index: &Path) -> Result<BTreeMap<Variable, Climatology>> {
    let mut out: BTreeMap<Variable, Climatology> = BTreeMap::new();
    for entry in read_climatology_index(index)? {
        let mu = wxg1::read_file(&entry.mu)?;
        let sigma = wxg1::read_file(&entry.sigma)?;
        if mu.grid != sigma.grid {
            return Err(Error::Config(format!(
                "climatology mu/sigma grids differ for {}",
                entry.mu.display()
            )));
        }
        let clim = out
            .entry(entry.variable)
            .or_insert_with(|| Climatology::empty(Arc::new(mu.grid.clone()), entry.variable));
        if **clim.grid() != mu.grid {
            return Err(Error::Config(format!("climatology grid differs for {}", entry.variable)));
        }
        clim.set(entry.doy, entry.hour, mu.values, sigma.values)?;
    }
    Ok(out)
}

impl Context {
    pub fn open(config: RunConfig) -> Result<Self> {
        let forecasts = read_manifest(&config.forecast_manifest)?;
        let verification = read_manifest(&config.verification_manifest)?;
        let mut set = build_forecast_set(&forecasts, &verification);
        for (model, meta) in &config.model_meta {
            set.set_model_meta(model.clone(), meta.clone());
        }
        let climatologies = match &config.climatology_index {
            Some(p) => load_climatologies(p)?,
            None => BTreeMap::new(),
        };
        let available = set.models();
        let models: Vec<String> = if config.models.is_empty() {
            available.into_iter().collect()
        } else {
            let chosen: BTreeSet<String> = config.models.iter().filter(|m| available.contains(*m)).cloned().collect();
            chosen.into_iter().collect()
        };
        let variables: Vec<Variable> = if config.variables.is_empty() {
            set.variables().into_iter().collect()
        } else {
            let v: BTreeSet<Variable> = config.variables.iter().copied().collect();
            v.into_iter().collect()
        };
        let leads: Vec<u32> = if config.leads.is_empty() {
            models.iter().flat_map(|m| set.leads_for(m)).collect::<BTreeSet<_>>().into_iter().collect()
        } else {
            config.leads.iter().copied().collect::<BTreeSet<_>>().into_iter().collect()
        };
        let workers = config
            .workers
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?;
        Ok(Self {
            config,
            set,
            climatologies,
            models,
            variables,
            leads,
            pool,
        })
    }

    pub fn models(&self) -> &[String] {
        &self.models
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn leads(&self) -> &[u32] {
        &self.leads
    }

    pub fn climatology(&self, variable: Variable) -> Option<&Climatology> {
        self.climatologies.get(&variable)
    }

    pub(crate) fn family(&self, model: &str) -> Option<&str> {
        self.set.model_meta(model).and_then(|m| m.family.as_deref())
    }

    pub(crate) fn loss(&self, model: &str) -> Option<&str> {
        self.set.model_meta(model).and_then(|m| m.loss.as_deref())
    }

    /// Selected forecast cells for `variable`, in (model, init, lead) order.
    /// Variable selection applies to the per-variable stages only; derived
    /// diagnostics ask for the variables they need.
    pub(crate) fn keys(&self, variable: Variable) -> Vec<ForecastKey> {
        self.set
            .forecasts()
            .map(|(k, _)| k)
            .filter(|k| {
                k.variable == variable
                    && self.models.binary_search(&k.model).is_ok()
                    && self.leads.binary_search(&k.lead_hours).is_ok()
            })
            .cloned()
            .collect()
    }

    pub(crate) fn init_times(&self) -> Vec<DateTime<Utc>> {
        self.set.init_times().into_iter().collect()
    }

    pub(crate) fn has_forecast(&self, key: &ForecastKey) -> bool {
        self.set.forecast_path(key).is_some()
    }

    fn read(path: &Path, meta: FieldMeta) -> Result<ScalarField> {
        let data = wxg1::read_file(path)?;
        ScalarField::new(Arc::new(data.grid), data.values, meta)
    }

    pub(crate) fn forecast(&self, key: &ForecastKey) -> Result<ScalarField> {
        let path = self
            .set
            .forecast_path(key)
            .ok_or_else(|| Error::MissingField(format!("forecast {}", cell_label(key))))?;
        Self::read(path, FieldMeta::new(key.variable, &key.model, key.init_time, key.lead_hours))
    }

    pub(crate) fn verification(&self, key: &ForecastKey) -> Result<ScalarField> {
        let path = self
            .set
            .verification_for(key)
            .ok_or_else(|| Error::MissingField(format!("verification for {}", cell_label(key))))?;
        Self::read(path, FieldMeta::new(key.variable, &key.model, key.init_time, key.lead_hours))
    }

    /// Verification field at a valid time, if the manifest lists one.
    pub(crate) fn verification_at(&self, variable: Variable, valid: DateTime<Utc>) -> Option<Result<ScalarField>> {
        let path = self.set.verification_path(variable, valid)?;
        let meta = FieldMeta::new(variable, "verification", valid, 0);
        Some(Self::read(path, meta))
    }

    /// Order-preserving parallel map on the configured pool.
    pub(crate) fn par_map<T: Sync, R: Send>(&self, items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
        self.pool.install(|| items.par_iter().map(f).collect())
    }

    fn out(&self, name: &str) -> PathBuf {
        self.config.out_dir.join(name)
    }
}

fn metric_variables(metric: Metric, cfg: &RunConfig) -> Vec<Variable> {
    let d = &cfg.diagnostics;
    match metric {
        Metric::Spectra | Metric::Skill | Metric::Consensus => cfg.variables.clone(),
        Metric::Dynamics => vec![d.growth_variable, Variable::U500, Variable::V500],
        Metric::Balance => BALANCE_VARIABLES.to_vec(),
        Metric::Extremes => vec![d.extremes_variable],
        Metric::Hmas => {
            let mut v = vec![d.spectral_variable, d.growth_variable, d.extremes_variable];
            v.extend(BALANCE_VARIABLES);
            v
        }
        Metric::Sfs => {
            let mut v = vec![d.sfs.variable];
            v.extend(d.sfs.coverage.iter().map(|c| c.variable));
            v
        }
    }
}

/// Checks a configuration without running it: missing files, variable gaps
/// per model, lead mismatches across models, missing verification and
/// missing climatology for the selected diagnostics.
pub fn validate(config: &RunConfig) -> Vec<Finding> {
    let mut findings = Vec::new();
    let mut manifests = Vec::new();
    for (what, path) in [
        ("forecast manifest", &config.forecast_manifest),
        ("verification manifest", &config.verification_manifest),
    ] {
        match read_manifest(path) {
            Ok(entries) => manifests.push(entries),
            Err(e) => findings.push(Finding::new(format!("{what}: {e}"))),
        }
    }
    let metrics = config.selected_metrics();
    let needs_clim = metrics.iter().any(|m| matches!(m, Metric::Extremes | Metric::Hmas));
    let mut index_failed = false;
    let clim_vars: BTreeSet<Variable> = match &config.climatology_index {
        Some(p) => match read_climatology_index(p) {
            Ok(entries) => {
                for e in &entries {
                    for f in [&e.mu, &e.sigma] {
                        if !f.is_file() {
                            findings.push(Finding::new(format!("missing climatology file {}", f.display())));
                        }
                    }
                }
                entries.iter().map(|e| e.variable).collect()
            }
            Err(e) => {
                findings.push(Finding::new(format!("climatology index: {e}")));
                index_failed = true;
                BTreeSet::new()
            }
        },
        None => BTreeSet::new(),
    };
    let tail_var = config.diagnostics.extremes_variable;
    if needs_clim && !index_failed && !clim_vars.contains(&tail_var) {
        findings.push(Finding::new(format!(
            "extreme-event skill needs a {tail_var} climatology but none is configured"
        )));
    }
    if metrics.contains(&Metric::Sfs) {
        if config.diagnostics.sfs.i0.is_none() {
            findings.push(Finding::new("SFS needs diagnostics.sfs.i0 (initial information, bits)"));
        }
        if config.diagnostics.sfs.coverage.is_empty() {
            findings.push(Finding::new("SFS needs at least one diagnostics.sfs.coverage range"));
        }
    }
    let [forecasts, verification] = match <[_; 2]>::try_from(manifests) {
        Ok(m) => m,
        Err(_) => return findings,
    };
    for e in forecasts.iter().chain(&verification) {
        if !e.path.is_file() {
            findings.push(Finding::new(format!("missing data file {}", e.path.display())));
        }
    }
    let set = build_forecast_set(&forecasts, &verification);
    let models: Vec<String> = if config.models.is_empty() {
        set.models().into_iter().collect()
    } else {
        config.models.clone()
    };
    for m in &models {
        if !set.models().contains(m) {
            findings.push(Finding::new(format!("model {m} has no forecasts in the manifest")));
        }
    }
    for (reference, model, leads) in set.lead_mismatches() {
        if models.contains(&reference) && models.contains(&model) {
            let ref_leads = set.leads_for(&reference);
            findings.push(Finding::new(format!(
                "lead mismatch: {model} has leads {:?}, {reference} has {:?}",
                leads, ref_leads
            )));
        }
    }
    let mut required: BTreeSet<Variable> = BTreeSet::new();
    for m in &metrics {
        required.extend(metric_variables(*m, config));
    }
    for m in &models {
        let have = set.variables_for(m);
        let missing: Vec<&str> = required.iter().filter(|v| !have.contains(v)).map(|v| v.as_str()).collect();
        if !missing.is_empty() && set.models().contains(m) {
            findings.push(Finding::new(format!("model {m} lacks variables {}", missing.join(", "))));
        }
    }
    let missing_verif = set
        .missing_verification()
        .into_iter()
        .filter(|k| models.contains(&k.model))
        .count();
    if missing_verif > 0 {
        findings.push(Finding::new(format!("{missing_verif} forecast fields have no verification")));
    }
    findings
}

/// Runs the selected diagnostics and writes their reports.
pub fn run(config: RunConfig) -> Result<RunSummary> {
    let metrics = config.selected_metrics();
    if metrics.is_empty() {
        log::warn!("no metrics selected; nothing to do");
        return Ok(RunSummary::default());
    }
    let ctx = Context::open(config)?;
    let mut stages = stages::Stages::new(&ctx);
    let mut written = Vec::new();
    for m in metrics {
        written.extend(stages.write(m)?);
    }
    let mut skipped = stages.into_skipped();
    skipped.sort();
    skipped.dedup();
    let mut table = Table::new(&["stage", "cell", "reason"]);
    for s in &skipped {
        table.push(vec![s.stage.to_string(), s.cell.clone(), s.reason.clone()]);
    }
    let path = ctx.out("skipped.csv");
    report::write_csv(&path, ctx.config.seed, &table)?;
    written.push(path);
    Ok(RunSummary { written, skipped })
}
