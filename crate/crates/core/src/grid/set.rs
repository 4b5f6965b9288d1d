use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use super::Variable;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ForecastKey {
    pub model: String,
    pub variable: Variable,
    pub init_time: DateTime<Utc>,
    pub lead_hours: u32,
}

impl ForecastKey {
    pub fn valid_time(&self) -> DateTime<Utc> {
        self.init_time + Duration::hours(i64::from(self.lead_hours))
    }
}

/// Architecture and loss tags for one model.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelMeta {
    #[serde(default)]
    pub family: Option<String>,
    #[serde(default)]
    pub loss: Option<String>,
}

/// Index of forecast and verification fields. Handles are file paths; fields
/// are loaded on demand by the pipeline.
#[derive(Debug, Clone, Default)]
pub struct ForecastSet {
    forecasts: BTreeMap<ForecastKey, PathBuf>,
    verification: BTreeMap<(Variable, DateTime<Utc>), PathBuf>,
    model_meta: BTreeMap<String, ModelMeta>,
}

impl ForecastSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert_forecast(&mut self, key: ForecastKey, path: impl Into<PathBuf>) {
        self.forecasts.insert(key, path.into());
    }

    pub fn insert_verification(&mut self, variable: Variable, valid_time: DateTime<Utc>, path: impl Into<PathBuf>) {
        self.verification.insert((variable, valid_time), path.into());
    }

    pub fn set_model_meta(&mut self, model: impl Into<String>, meta: ModelMeta) {
        self.model_meta.insert(model.into(), meta);
    }

    pub fn model_meta(&self, model: &str) -> Option<&ModelMeta> {
        self.model_meta.get(model)
    }

    pub fn forecasts(&self) -> impl Iterator<Item = (&ForecastKey, &Path)> {
        self.forecasts.iter().map(|(k, p)| (k, p.as_path()))
    }

    pub fn verifications(&self) -> impl Iterator<Item = (Variable, DateTime<Utc>, &Path)> {
        self.verification.iter().map(|((v, t), p)| (*v, *t, p.as_path()))
    }

    pub fn forecast_path(&self, key: &ForecastKey) -> Option<&Path> {
        self.forecasts.get(key).map(PathBuf::as_path)
    }

    pub fn verification_path(&self, variable: Variable, valid_time: DateTime<Utc>) -> Option<&Path> {
        self.verification.get(&(variable, valid_time)).map(PathBuf::as_path)
    }

    pub fn verification_for(&self, key: &ForecastKey) -> Option<&Path> {
        self.verification_path(key.variable, key.valid_time())
    }

    pub fn models(&self) -> BTreeSet<String> {
        self.forecasts.keys().map(|k| k.model.clone()).collect()
    }

    pub fn variables(&self) -> BTreeSet<Variable> {
        self.forecasts.keys().map(|k| k.variable).collect()
    }

    pub fn init_times(&self) -> BTreeSet<DateTime<Utc>> {
        self.forecasts.keys().map(|k| k.init_time).collect()
    }

    pub fn leads_for(&self, model: &str) -> BTreeSet<u32> {
        self.forecasts
            .keys()
            .filter(|k| k.model == model)
            .map(|k| k.lead_hours)
            .collect()
    }

    /// Leads shared by every model.
    pub fn common_leads(&self) -> BTreeSet<u32> {
        let mut it = self.models().into_iter().map(|m| self.leads_for(&m));
        let Some(first) = it.next() else {
            return BTreeSet::new();
        };
        it.fold(first, |acc, l| acc.intersection(&l).copied().collect())
    }

    pub fn variables_for(&self, model: &str) -> BTreeSet<Variable> {
        self.forecasts
            .keys()
            .filter(|k| k.model == model)
            .map(|k| k.variable)
            .collect()
    }

    /// Forecast entries with no verification field at their valid time.
    pub fn missing_verification(&self) -> Vec<&ForecastKey> {
        self.forecasts
            .keys()
            .filter(|k| !self.verification.contains_key(&(k.variable, k.valid_time())))
            .collect()
    }

    /// Models whose lead grid differs from the first model's, as
    /// `(reference model, model, its leads)`.
    pub fn lead_mismatches(&self) -> Vec<(String, String, BTreeSet<u32>)> {
        let models = self.models();
        let mut it = models.iter();
        let Some(reference) = it.next() else {
            return Vec::new();
        };
        let ref_leads = self.leads_for(reference);
        it.filter_map(|m| {
            let leads = self.leads_for(m);
            (leads != ref_leads).then(|| (reference.clone(), m.clone(), leads))
        })
        .collect()
    }
}
