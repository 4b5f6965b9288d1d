//! Composite scoring: the six-dimension HMAS, weight sensitivity with
//! Kendall's W, cross-metric correlation, Pareto filtering of pipeline
//! configurations, and the pre-training Spectral Feasibility Score.

mod fixture;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{predicted_sfi, ConditionalVarianceSpectrum, LossFamily, Spectrum};
use crate::stats::pearson;

pub use fixture::{parse_metrics_csv, read_metrics_csv, MetricRow};

pub const METRIC_NAMES: [&str; 6] = ["sfi", "l_eff", "tau_d", "ees", "pcs", "asi"];
const WEIGHT_TOLERANCE: f64 = 1e-12;

/// The six normalized metrics, each in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HmasInputs {
    pub sfi: f64,
    pub l_eff: f64,
    pub tau_d: f64,
    pub ees: f64,
    pub pcs: f64,
    pub asi: f64,
}

impl HmasInputs {
    pub fn from_array(m: [f64; 6]) -> Self {
        Self {
            sfi: m[0],
            l_eff: m[1],
            tau_d: m[2],
            ees: m[3],
            pcs: m[4],
            asi: m[5],
        }
    }

    pub fn as_array(&self) -> [f64; 6] {
        [self.sfi, self.l_eff, self.tau_d, self.ees, self.pcs, self.asi]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, value) in METRIC_NAMES.iter().zip(self.as_array()) {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::OutOfRangeMetric { name, value });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightScheme {
    pub name: String,
    pub weights: [f64; 6],
}

impl WeightScheme {
    pub fn new(name: impl Into<String>, weights: [f64; 6]) -> Result<Self> {
        let s = Self {
            name: name.into(),
            weights,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidWeights(format!("{}: negative or non-finite weight", self.name)));
        }
        let sum: f64 = self.weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_TOLERANCE {
            return Err(Error::InvalidWeights(format!("{}: weights sum to {sum}", self.name)));
        }
        Ok(())
    }

    fn fixed(name: &str, weights: [f64; 6]) -> Self {
        // Decimal literals do not always sum to exactly 1.0 in binary.
        let sum: f64 = weights.iter().sum();
        Self {
            name: name.to_string(),
            weights: weights.map(|w| w / sum),
        }
    }

    pub fn default_scheme() -> Self {
        Self::fixed("default", [0.20, 0.15, 0.15, 0.15, 0.15, 0.20])
    }

    pub fn equal() -> Self {
        Self::fixed("equal", [1.0 / 6.0; 6])
    }

    pub fn accuracy() -> Self {
        Self::fixed("accuracy", [0.15, 0.20, 0.25, 0.10, 0.10, 0.20])
    }

    pub fn extremes() -> Self {
        Self::fixed("extremes", [0.15, 0.10, 0.10, 0.40, 0.15, 0.10])
    }

    pub fn stability() -> Self {
        Self::fixed("stability", [0.10, 0.10, 0.10, 0.10, 0.20, 0.40])
    }

    /// Default plus the four alternative emphases.
    pub fn standard_set() -> Vec<Self> {
        vec![
            Self::default_scheme(),
            Self::equal(),
            Self::accuracy(),
            Self::extremes(),
            Self::stability(),
        ]
    }
}

impl Default for WeightScheme {
    fn default() -> Self {
        Self::default_scheme()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HmasRecord {
    pub model: String,
    pub lead_hours: u32,
    #[serde(flatten)]
    pub metrics: HmasInputs,
    pub hmas: f64,
    pub scheme: String,
    pub weights: [f64; 6],
}

pub fn hmas_score(inputs: &HmasInputs, scheme: &WeightScheme) -> Result<f64> {
    inputs.validate()?;
    scheme.validate()?;
    Ok(inputs.as_array().iter().zip(&scheme.weights).map(|(m, w)| m * w).sum())
}

pub fn hmas(model: impl Into<String>, lead_hours: u32, inputs: HmasInputs, scheme: &WeightScheme) -> Result<HmasRecord> {
    Ok(HmasRecord {
        model: model.into(),
        lead_hours,
        hmas: hmas_score(&inputs, scheme)?,
        metrics: inputs,
        scheme: scheme.name.clone(),
        weights: scheme.weights,
    })
}

/// 1-based ranks, largest value first; ties share the mean of their ranks.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Kendall's coefficient of concordance for `m` raters (rows) ranking the
/// same `n` items, with tie correction.
pub fn kendall_w(ranks: &[Vec<f64>]) -> Result<f64> {
    let m = ranks.len();
    if m < 2 {
        return Err(Error::TooFew {
            what: "rankings",
            needed: 2,
            got: m,
        });
    }
    let n = ranks[0].len();
    if ranks.iter().any(|r| r.len() != n) {
        return Err(Error::InvalidSeries("rank vectors differ in length".into()));
    }
    if n < 2 {
        return Err(Error::TooFew {
            what: "ranked items",
            needed: 2,
            got: n,
        });
    }
    let totals: Vec<f64> = (0..n).map(|j| ranks.iter().map(|r| r[j]).sum()).collect();
    let mean_total = m as f64 * (n as f64 + 1.0) / 2.0;
    let s: f64 = totals.iter().map(|t| (t - mean_total).powi(2)).sum();
    let ties: f64 = ranks.iter().map(|r| tie_term(r)).sum();
    let (mf, nf) = (m as f64, n as f64);
    let denom = mf * mf * (nf.powi(3) - nf) - mf * ties;
    if denom <= 0.0 {
        return Err(Error::DegenerateRanks);
    }
    Ok((12.0 * s / denom).clamp(0.0, 1.0))
}

/// Sum over tie groups of `t^3 - t`.
fn tie_term(ranks: &[f64]) -> f64 {
    let mut sorted = ranks.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut total = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        total += t * t * t - t;
        i = j + 1;
    }
    total
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityTable {
    pub models: Vec<String>,
    pub schemes: Vec<String>,
    /// `scores[s][j]`: HMAS of model j under scheme s.
    pub scores: Vec<Vec<f64>>,
    pub ranks: Vec<Vec<f64>>,
    pub kendall_w: f64,
}

pub fn weight_sensitivity(models: &[(String, HmasInputs)], schemes: &[WeightScheme]) -> Result<SensitivityTable> {
    if schemes.len() < 2 {
        return Err(Error::TooFew {
            what: "weight schemes",
            needed: 2,
            got: schemes.len(),
        });
    }
    if models.len() < 3 {
        return Err(Error::TooFew {
            what: "models",
            needed: 3,
            got: models.len(),
        });
    }
    let mut scores = Vec::with_capacity(schemes.len());
    for scheme in schemes {
        let row = models.iter().map(|(_, m)| hmas_score(m, scheme)).collect::<Result<Vec<_>>>()?;
        scores.push(row);
    }
    let ranks: Vec<Vec<f64>> = scores.iter().map(|s| midranks(s)).collect();
    let kendall_w = kendall_w(&ranks)?;
    Ok(SensitivityTable {
        models: models.iter().map(|(n, _)| n.clone()).collect(),
        schemes: schemes.iter().map(|s| s.name.clone()).collect(),
        scores,
        ranks,
        kendall_w,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub names: Vec<String>,
    /// `None` where either metric has zero variance across models.
    pub rho: Vec<Vec<Option<f64>>>,
    pub mean_abs_off_diagonal: Option<f64>,
}

impl CorrelationMatrix {
    pub fn undefined(&self) -> Vec<&str> {
        self.names
            .iter()
            .enumerate()
            .filter(|(i, _)| self.rho[*i][*i].is_none())
            .map(|(_, n)| n.as_str())
            .collect()
    }
}

/// Pearson correlation across models for every pair of metric columns.
pub fn metric_correlation(records: &[HmasInputs]) -> Result<CorrelationMatrix> {
    if records.len() < 3 {
        return Err(Error::TooFew {
            what: "models",
            needed: 3,
            got: records.len(),
        });
    }
    let columns: Vec<Vec<f64>> = (0..6).map(|i| records.iter().map(|r| r.as_array()[i]).collect()).collect();
    let mut rho = vec![vec![None; 6]; 6];
    let mut off = Vec::new();
    for i in 0..6 {
        for j in 0..6 {
            rho[i][j] = pearson(&columns[i], &columns[j]);
            if i < j {
                if let Some(r) = rho[i][j] {
                    off.push(r.abs());
                }
            }
        }
    }
    let mean_abs_off_diagonal = (!off.is_empty()).then(|| off.iter().sum::<f64>() / off.len() as f64);
    Ok(CorrelationMatrix {
        names: METRIC_NAMES.iter().map(|s| s.to_string()).collect(),
        rho,
        mean_abs_off_diagonal,
    })
}

/// `a` weakly dominates `b` everywhere and strictly somewhere.
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x >= y) && a.iter().zip(b).any(|(x, y)| x > y)
}

/// Indices of non-dominated points (larger is better), in input order.
pub fn pareto_front(points: &[Vec<f64>]) -> Result<Vec<usize>> {
    if let Some(first) = points.first() {
        if points.iter().any(|p| p.len() != first.len()) {
            return Err(Error::InvalidSeries("metric vectors differ in dimension".into()));
        }
    }
    // Sort lexicographically descending; a point can only be dominated by one
    // that sorts before it, so each point is checked against the current front.
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        points[b]
            .iter()
            .zip(&points[a])
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut front: Vec<usize> = Vec::new();
    for idx in order {
        if !front.iter().any(|&f| dominates(&points[f], &points[idx])) {
            front.push(idx);
        }
    }
    front.sort_unstable();
    Ok(front)
}

/// Training support for one variable against the values it will be
/// evaluated on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageInput {
    pub variable: String,
    pub train_min: f64,
    pub train_max: f64,
    pub samples: Vec<f64>,
}

impl CoverageInput {
    pub fn fraction(&self) -> Result<f64> {
        if self.samples.is_empty() {
            return Err(Error::TooFew {
                what: "evaluation samples",
                needed: 1,
                got: 0,
            });
        }
        let inside = self
            .samples
            .iter()
            .filter(|x| **x >= self.train_min && **x <= self.train_max)
            .count();
        Ok(inside as f64 / self.samples.len() as f64)
    }
}

pub fn data_coverage(inputs: &[CoverageInput]) -> Result<f64> {
    if inputs.is_empty() {
        return Err(Error::TooFew {
            what: "coverage variables",
            needed: 1,
            got: 0,
        });
    }
    let fractions = inputs.iter().map(CoverageInput::fraction).collect::<Result<Vec<_>>>()?;
    Ok(fractions.iter().sum::<f64>() / fractions.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SfsWeights {
    pub spectral: f64,
    pub coverage: f64,
    pub information: f64,
}

impl Default for SfsWeights {
    fn default() -> Self {
        Self {
            spectral: 1.0 / 3.0,
            coverage: 1.0 / 3.0,
            information: 1.0 / 3.0,
        }
    }
}

impl SfsWeights {
    fn validate(&self) -> Result<()> {
        let w = [self.spectral, self.coverage, self.information];
        if w.iter().any(|x| !(*x >= 0.0)) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidWeights(format!("SFS weights {w:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InformationBudget {
    /// Entropy production rate in bits per day.
    pub h_ks: f64,
    /// Initial-condition information in bits.
    pub i0: f64,
    /// Forecast horizon in days.
    pub tau_days: f64,
}

impl InformationBudget {
    pub fn score(&self) -> Result<f64> {
        if !(self.i0 > 0.0) {
            return Err(Error::InvalidInformationBudget(self.i0));
        }
        Ok((1.0 - self.h_ks * self.tau_days / self.i0).max(0.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SfsReport {
    pub sfi_predicted: f64,
    pub coverage: f64,
    pub information: f64,
    pub sfs: f64,
}

pub struct SfsInputs<'a> {
    pub loss: LossFamily,
    pub var_spec: &'a ConditionalVarianceSpectrum,
    pub truth: &'a Spectrum,
    pub sample_noise: Option<&'a Spectrum>,
    pub coverage: &'a [CoverageInput],
    pub budget: InformationBudget,
    pub weights: SfsWeights,
}

pub fn sfs(inputs: &SfsInputs<'_>) -> Result<SfsReport> {
    inputs.weights.validate()?;
    let information = inputs.budget.score()?;
    let sfi_predicted = predicted_sfi(inputs.loss, inputs.var_spec, inputs.truth, inputs.sample_noise)?;
    let coverage = data_coverage(inputs.coverage)?;
    let w = inputs.weights;
    Ok(SfsReport {
        sfi_predicted,
        coverage,
        information,
        sfs: w.spectral * sfi_predicted + w.coverage * coverage + w.information * information,
    })
}
