use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid field: {0}")]
    InvalidField(String),
    #[error("fields are on different grids")]
    GridMismatch,
    #[error("grid too coarse: {limit} complete shells, need at least {needed}")]
    GridTooCoarse { limit: usize, needed: usize },
    #[error("spectra have different shell support ({left} vs {right})")]
    ShellMismatch { left: usize, right: usize },
    #[error("no shells left to score")]
    InsufficientSpectrum,
    #[error("nonpositive energy at shell {0}")]
    NonpositiveEnergy(usize),
    #[error("invalid fit range [{lo}, {hi}]")]
    InvalidRange { lo: usize, hi: usize },
    #[error("need at least 2 ensemble members, got {0}")]
    InsufficientEnsemble(usize),
    #[error("conditional variance {variance} exceeds true energy {energy} at shell {k}")]
    InconsistentVariance { k: usize, variance: f64, energy: f64 },
    #[error("score-matching prediction needs a sampling-noise spectrum")]
    MissingSampleNoise,

    #[error("anomaly variance is zero")]
    DegenerateAnomaly,
    #[error("climatology has no samples for {0}")]
    InsufficientHistory(String),
    #[error("need at least 2 samples, got {0}")]
    InsufficientSamples(usize),
    #[error("climatology does not cover day {doy} hour {hour}")]
    ClimatologyGap { doy: u32, hour: u32 },

    #[error("need at least 2 models, got {0}")]
    TooFewModels(usize),
    #[error("all error fields are identically zero")]
    DegenerateErrors,
    #[error("error field for {0} has zero variance")]
    DegenerateField(String),

    #[error("invalid series: {0}")]
    InvalidSeries(String),
    #[error("missing wind component at lead {0} h")]
    MissingComponent(u32),

    #[error("flow has zero vorticity on the balance mask")]
    DegenerateFlow,
    #[error("actual wind shear is zero on the balance mask")]
    DegenerateShear,
    #[error("geopotential thickness is zero")]
    DegenerateThickness,
    #[error("balance mask is empty")]
    EmptyBalanceMask,
    #[error("missing balance sub-score: {0}")]
    IncompleteBalance(&'static str),

    #[error("no grid points exceed the climatological threshold")]
    NoExtremes,
    #[error("unconditional RMSE is zero")]
    ZeroRmse,
    #[error("tail curve has {0} populated bins, need at least 2")]
    InsufficientTail(usize),

    #[error("metric {name} = {value} is outside [0, 1]")]
    OutOfRangeMetric { name: &'static str, value: f64 },
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("rankings are degenerate (every model tied under every scheme)")]
    DegenerateRanks,
    #[error("need at least {needed} {what}, got {got}")]
    TooFew { what: &'static str, needed: usize, got: usize },
    #[error("information budget must be positive, got {0}")]
    InvalidInformationBudget(f64),

    #[error("missing field: {0}")]
    MissingField(String),
    #[error("malformed WXG1 data: {0}")]
    Format(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
