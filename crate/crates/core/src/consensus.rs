//! Multi-model shared-error diagnostics: Error Consensus Ratio, pairwise
//! error correlation and the scale-resolved Model Error Divergence.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ensure_same_grid, weighted_mean, ScalarField};
use crate::spectral::{isotropic_spectrum, Spectrum};

/// Per-model error fields (forecast minus verification) on one grid at one
/// valid time.
#[derive(Debug, Clone)]
pub struct ErrorEnsemble {
    members: Vec<ErrorMember>,
}

#[derive(Debug, Clone)]
pub struct ErrorMember {
    pub model: String,
    /// Architecture family; models without one form their own family.
    pub family: Option<String>,
    pub error: ScalarField,
}

impl ErrorMember {
    fn family_key(&self) -> &str {
        self.family.as_deref().unwrap_or(&self.model)
    }
}

impl ErrorEnsemble {
    pub fn new(members: Vec<ErrorMember>) -> Result<Self> {
        if members.len() < 2 {
            return Err(Error::TooFewModels(members.len()));
        }
        for m in &members[1..] {
            ensure_same_grid(&members[0].error, &m.error)?;
        }
        Ok(Self { members })
    }

    /// Builds errors from `(model, family, forecast, verification)` tuples.
    pub fn from_pairs<'a>(
        pairs: impl IntoIterator<Item = (&'a str, Option<&'a str>, &'a ScalarField, &'a ScalarField)>,
    ) -> Result<Self> {
        let mut members = Vec::new();
        for (model, family, f, v) in pairs {
            ensure_same_grid(f, v)?;
            let values = f.values().iter().zip(v.values()).map(|(a, b)| a - b).collect();
            members.push(ErrorMember {
                model: model.to_string(),
                family: family.map(str::to_string),
                error: f.with_values(values)?,
            });
        }
        Self::new(members)
    }

    pub fn members(&self) -> &[ErrorMember] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// `<|e_bar|^2> / (<|e_bar|^2> + (1/M) sum_m <|e_m - e_bar|^2>)`.
pub fn ecr(errors: &ErrorEnsemble) -> Result<f64> {
    let members = errors.members();
    let grid = members[0].error.grid();
    let m = members.len() as f64;
    let n = grid.len();
    let mut mean = vec![0.0; n];
    for e in members {
        for (a, x) in mean.iter_mut().zip(e.error.values()) {
            *a += x;
        }
    }
    for a in &mut mean {
        *a /= m;
    }
    let sq: Vec<f64> = mean.iter().map(|x| x * x).collect();
    let shared = weighted_mean(grid, &sq, None);
    let mut spread = 0.0;
    for e in members {
        let r: Vec<f64> = e.error.values().iter().zip(&mean).map(|(x, a)| (x - a).powi(2)).collect();
        spread += weighted_mean(grid, &r, None);
    }
    spread /= m;
    let total = shared + spread;
    if !(total > 0.0) {
        return Err(Error::DegenerateErrors);
    }
    Ok(shared / total)
}

/// Area-weighted Pearson correlation with area-weighted means removed.
pub fn weighted_correlation(a: &ScalarField, b: &ScalarField) -> Result<Option<f64>> {
    ensure_same_grid(a, b)?;
    let grid = a.grid();
    let ma = weighted_mean(grid, a.values(), None);
    let mb = weighted_mean(grid, b.values(), None);
    let da: Vec<f64> = a.values().iter().map(|x| x - ma).collect();
    let db: Vec<f64> = b.values().iter().map(|x| x - mb).collect();
    let prod = |x: &[f64], y: &[f64]| -> f64 {
        let p: Vec<f64> = x.iter().zip(y).map(|(u, v)| u * v).collect();
        weighted_mean(grid, &p, None)
    };
    let (saa, sbb) = (prod(&da, &da), prod(&db, &db));
    if !(saa > 0.0 && sbb > 0.0) {
        return Ok(None);
    }
    Ok(Some((prod(&da, &db) / (saa * sbb).sqrt()).clamp(-1.0, 1.0)))
}

/// Mean weighted correlation over all model pairs of the raw error fields.
pub fn pairwise_error_correlation(errors: &ErrorEnsemble) -> Result<f64> {
    let members = errors.members();
    for m in members {
        let grid = m.error.grid();
        let mean = weighted_mean(grid, m.error.values(), None);
        let var: Vec<f64> = m.error.values().iter().map(|x| (x - mean).powi(2)).collect();
        if !(weighted_mean(grid, &var, None) > 0.0) {
            return Err(Error::DegenerateField(m.model.clone()));
        }
    }
    let (mut sum, mut pairs) = (0.0, 0usize);
    for i in 0..members.len() {
        for j in i + 1..members.len() {
            let r = weighted_correlation(&members[i].error, &members[j].error)?
                .ok_or_else(|| Error::DegenerateField(members[i].model.clone()))?;
            sum += r;
            pairs += 1;
        }
    }
    Ok(sum / pairs as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairGroup {
    All,
    Within,
    Cross,
}

impl PairGroup {
    pub const ALL: [PairGroup; 3] = [PairGroup::All, PairGroup::Within, PairGroup::Cross];

    pub fn as_str(self) -> &'static str {
        match self {
            PairGroup::All => "all",
            PairGroup::Within => "within",
            PairGroup::Cross => "cross",
        }
    }

    fn admits(self, a: &ErrorMember, b: &ErrorMember) -> bool {
        match self {
            PairGroup::All => true,
            PairGroup::Within => a.family_key() == b.family_key(),
            PairGroup::Cross => a.family_key() != b.family_key(),
        }
    }
}

/// Model Error Divergence per shell, averaged over the selected pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MedCurve {
    pub group: PairGroup,
    /// Value at shell k stored at index k - 1; `None` where every selected
    /// pair had zero energy in both spectra.
    pub med: Vec<Option<f64>>,
    pub pairs: usize,
}

impl MedCurve {
    pub fn get(&self, k: usize) -> Option<f64> {
        self.med.get(k.wrapping_sub(1)).copied().flatten()
    }

    pub fn flagged(&self) -> Vec<usize> {
        self.med
            .iter()
            .enumerate()
            .filter(|(_, m)| m.is_none())
            .map(|(i, _)| i + 1)
            .collect()
    }
}

/// Bray-Curtis dissimilarity of two spectra per shell.
pub fn bray_curtis(a: &Spectrum, b: &Spectrum) -> Result<Vec<Option<f64>>> {
    if a.k_max() != b.k_max() {
        return Err(Error::ShellMismatch {
            left: a.k_max(),
            right: b.k_max(),
        });
    }
    Ok(a.energies()
        .iter()
        .zip(b.energies())
        .map(|(x, y)| (x + y > 0.0).then(|| (x - y).abs() / (x + y)))
        .collect())
}

/// MED from precomputed error spectra, one per ensemble member.
pub fn med_from_spectra(errors: &ErrorEnsemble, spectra: &[Spectrum], group: PairGroup) -> Result<MedCurve> {
    let members = errors.members();
    debug_assert_eq!(members.len(), spectra.len());
    let k_max = spectra[0].k_max();
    let mut sum = vec![0.0; k_max];
    let mut count = vec![0usize; k_max];
    let mut pairs = 0;
    for i in 0..members.len() {
        for j in i + 1..members.len() {
            if !group.admits(&members[i], &members[j]) {
                continue;
            }
            pairs += 1;
            for (k, d) in bray_curtis(&spectra[i], &spectra[j])?.into_iter().enumerate() {
                if let Some(d) = d {
                    sum[k] += d;
                    count[k] += 1;
                }
            }
        }
    }
    if pairs == 0 {
        return Err(Error::TooFew {
            what: "model pairs in group",
            needed: 1,
            got: 0,
        });
    }
    let med = sum
        .iter()
        .zip(&count)
        .map(|(s, &c)| (c > 0).then(|| s / c as f64))
        .collect();
    Ok(MedCurve { group, med, pairs })
}

pub fn med(errors: &ErrorEnsemble, group: PairGroup) -> Result<MedCurve> {
    let spectra = error_spectra(errors)?;
    med_from_spectra(errors, &spectra, group)
}

pub fn error_spectra(errors: &ErrorEnsemble) -> Result<Vec<Spectrum>> {
    errors.members().iter().map(|m| isotropic_spectrum(&m.error)).collect()
}

/// Family membership as a sorted map, for reports.
pub fn families(errors: &ErrorEnsemble) -> BTreeMap<String, Vec<String>> {
    let mut out: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for m in errors.members() {
        out.entry(m.family_key().to_string()).or_default().push(m.model.clone());
    }
    out
}
