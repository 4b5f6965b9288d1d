use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::balance::BalanceConfig;
use crate::composite::{SfsWeights, WeightScheme};
use crate::dynamics::DEFAULT_GROWTH_WINDOW_DAYS;
use crate::error::{Error, Result};
use crate::extremes::TailConfig;
use crate::grid::{ModelMeta, Variable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Spectra,
    Skill,
    Consensus,
    Dynamics,
    Balance,
    Extremes,
    Hmas,
    Sfs,
}

impl Metric {
    pub const ALL: [Metric; 8] = [
        Metric::Spectra,
        Metric::Skill,
        Metric::Consensus,
        Metric::Dynamics,
        Metric::Balance,
        Metric::Extremes,
        Metric::Hmas,
        Metric::Sfs,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Spectra => "spectra",
            Metric::Skill => "skill",
            Metric::Consensus => "consensus",
            Metric::Dynamics => "dynamics",
            Metric::Balance => "balance",
            Metric::Extremes => "extremes",
            Metric::Hmas => "hmas",
            Metric::Sfs => "sfs",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(format!("unknown metric {s:?}")))
    }
}

/// Training-data support for one variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverageRange {
    pub variable: Variable,
    pub train_min: f64,
    pub train_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SfsConfig {
    pub variable: Variable,
    /// Evaluation lead; the longest selected lead when absent.
    pub lead_hours: Option<u32>,
    /// Bits per day. Estimated from the fitted error-growth rates when absent.
    pub h_ks: Option<f64>,
    /// Initial information in bits; required for the SFS.
    pub i0: Option<f64>,
    pub weights: SfsWeights,
    pub coverage: Vec<CoverageRange>,
}

impl Default for SfsConfig {
    fn default() -> Self {
        Self {
            variable: Variable::U500,
            lead_hours: None,
            h_ks: None,
            i0: None,
            weights: SfsWeights::default(),
            coverage: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsConfig {
    /// Variable behind SFI and effective resolution in the HMAS table.
    pub spectral_variable: Variable,
    pub growth_variable: Variable,
    pub growth_window_days: (f64, f64),
    /// Drift window; the longest selected lead when absent.
    pub asi_window_days: Option<f64>,
    pub extremes_variable: Variable,
    pub acc_centered: bool,
    pub balance: BalanceConfig,
    pub tail: TailConfig,
    /// First scheme is the headline; all feed the sensitivity analysis.
    pub hmas_schemes: Vec<WeightScheme>,
    pub sfs: SfsConfig,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self {
            spectral_variable: Variable::U500,
            growth_variable: Variable::Z500,
            growth_window_days: DEFAULT_GROWTH_WINDOW_DAYS,
            asi_window_days: None,
            extremes_variable: Variable::T2m,
            acc_centered: true,
            balance: BalanceConfig::default(),
            tail: TailConfig::default(),
            hmas_schemes: WeightScheme::standard_set(),
            sfs: SfsConfig::default(),
        }
    }
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("wxdiag-out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub forecast_manifest: PathBuf,
    pub verification_manifest: PathBuf,
    #[serde(default)]
    pub climatology_index: Option<PathBuf>,
    /// Empty selects everything present in the manifests.
    #[serde(default)]
    pub variables: Vec<Variable>,
    #[serde(default)]
    pub leads: Vec<u32>,
    #[serde(default)]
    pub models: Vec<String>,
    #[serde(default)]
    pub model_meta: BTreeMap<String, ModelMeta>,
    /// `None` runs everything; an empty list runs nothing.
    #[serde(default)]
    pub metrics: Option<Vec<Metric>>,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
}

impl RunConfig {
    pub fn new(forecast_manifest: impl Into<PathBuf>, verification_manifest: impl Into<PathBuf>) -> Self {
        Self {
            forecast_manifest: forecast_manifest.into(),
            verification_manifest: verification_manifest.into(),
            climatology_index: None,
            variables: Vec::new(),
            leads: Vec::new(),
            models: Vec::new(),
            model_meta: BTreeMap::new(),
            metrics: None,
            out_dir: default_out_dir(),
            workers: None,
            seed: 0,
            diagnostics: DiagnosticsConfig::default(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    /// Reads a config file; relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut cfg.forecast_manifest);
        fix(&mut cfg.verification_manifest);
        if let Some(c) = cfg.climatology_index.as_mut() {
            fix(c);
        }
        fix(&mut cfg.out_dir);
        Ok(cfg)
    }

    fn check(&self) -> Result<()> {
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        self.diagnostics.tail.validate()?;
        for s in &self.diagnostics.hmas_schemes {
            s.validate()?;
        }
        if self.diagnostics.hmas_schemes.is_empty() {
            return Err(Error::Config("at least one HMAS weight scheme is required".into()));
        }
        let (lo, hi) = self.diagnostics.growth_window_days;
        if !(hi > lo) {
            return Err(Error::Config(format!("growth window [{lo}, {hi}] days")));
        }
        Ok(())
    }

    pub fn selected_metrics(&self) -> Vec<Metric> {
        let mut m = self.metrics.clone().unwrap_or_else(|| Metric::ALL.to_vec());
        m.sort();
        m.dedup();
        m
    }
}
