//! Per-diagnostic map/reduce stages. Intermediate results are memoized so
//! HMAS and SFS reuse what the individual stages computed.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::PathBuf;

use chrono::{DateTime, Duration, Utc};
use serde::Serialize;

use super::hmas::{build_hmas_tables, write_hmas_reports, HmasCell};
use super::report::{num, opt, write_csv, write_json, Table};
use super::{cell_label, Context, Metric, Skip, BALANCE_VARIABLES};
use crate::balance::{balance_report, layer_temperature, BalanceFields};
use crate::composite::{sfs, CoverageInput, HmasInputs, InformationBudget, SfsInputs};
use crate::consensus::{ecr, error_spectra, med_from_spectra, pairwise_error_correlation, ErrorEnsemble, PairGroup};
use crate::dynamics::{asi, fit_lyapunov, kinetic_energy, GrowthFit, KeDrift};
use crate::error::{Error, Result};
use crate::extremes::{alpha_evolution, ees, TailAccumulator, TailCurve};
use crate::grid::{ForecastKey, ScalarField, Variable};
use crate::skill::{acc, confidence_interval, rmse, scorecard, MetricSeries, Scorecard};
use crate::spectral::{
    effective_resolution, isotropic_spectrum, mean_spectrum, sfi, spectral_ratio, ConditionalVarianceSpectrum,
    LossFamily, Spectrum,
};
use crate::stats;

/// Mean and 90% half-width; a single sample has zero width.
fn mean_ci(xs: &[f64]) -> (f64, f64) {
    match confidence_interval(xs) {
        Ok(ci) => (ci.mean, ci.half_width),
        Err(_) => (stats::mean(xs), 0.0),
    }
}

struct SpectraGroup {
    forecast: Spectrum,
    verify: Spectrum,
    sfi: (f64, f64),
    l_eff: (f64, f64),
    l_eff_shell: f64,
    n: usize,
}

struct DynamicsRow {
    rmse: BTreeMap<u32, f64>,
    ke_ratio: BTreeMap<u32, f64>,
    growth: Option<GrowthFit>,
    drift: Option<KeDrift>,
}

#[derive(Default)]
struct BalanceGroup {
    scores: [f64; 4],
    ratios: [f64; 4],
    composite: f64,
    n: usize,
}

struct ExtremesGroup {
    curve: Option<TailCurve>,
    ees: Option<(f64, f64)>,
    n_ees: usize,
}

type ModelLead = (String, u32);

pub(super) struct Stages<'a> {
    ctx: &'a Context,
    skipped: Vec<Skip>,
    spectra: BTreeMap<Variable, BTreeMap<ModelLead, SpectraGroup>>,
    dynamics: Option<BTreeMap<String, DynamicsRow>>,
    balance: Option<BTreeMap<ModelLead, BalanceGroup>>,
    extremes: Option<BTreeMap<ModelLead, ExtremesGroup>>,
}

fn group_by_model_lead<T>(keys: &[ForecastKey], results: Vec<T>) -> BTreeMap<ModelLead, Vec<T>> {
    let mut out: BTreeMap<ModelLead, Vec<T>> = BTreeMap::new();
    for (k, r) in keys.iter().zip(results) {
        out.entry((k.model.clone(), k.lead_hours)).or_default().push(r);
    }
    out
}

impl<'a> Stages<'a> {
    pub(super) fn new(ctx: &'a Context) -> Self {
        Self {
            ctx,
            skipped: Vec::new(),
            spectra: BTreeMap::new(),
            dynamics: None,
            balance: None,
            extremes: None,
        }
    }

    pub(super) fn into_skipped(self) -> Vec<Skip> {
        self.skipped
    }

    fn skip(&mut self, stage: Metric, cell: impl Into<String>, reason: impl Display) {
        let cell = cell.into();
        log::warn!("{stage}: skipping {cell}: {reason}");
        self.skipped.push(Skip {
            stage,
            cell,
            reason: reason.to_string(),
        });
    }

    fn seed(&self) -> u64 {
        self.ctx.config.seed
    }

    fn out(&self, name: &str) -> PathBuf {
        self.ctx.out(name)
    }

    fn key(model: &str, variable: Variable, init: DateTime<Utc>, lead: u32) -> ForecastKey {
        ForecastKey {
            model: model.to_string(),
            variable,
            init_time: init,
            lead_hours: lead,
        }
    }

    pub(super) fn write(&mut self, metric: Metric) -> Result<Vec<PathBuf>> {
        match metric {
            Metric::Spectra => self.write_spectra(),
            Metric::Skill => self.write_skill(),
            Metric::Consensus => self.write_consensus(),
            Metric::Dynamics => self.write_dynamics(),
            Metric::Balance => self.write_balance(),
            Metric::Extremes => self.write_extremes(),
            Metric::Hmas => self.write_hmas(),
            Metric::Sfs => self.write_sfs(),
        }
    }

    // ---- spectra ----

    fn ensure_spectra(&mut self, variable: Variable) {
        if self.spectra.contains_key(&variable) {
            return;
        }
        let ctx = self.ctx;
        let keys = ctx.keys(variable);
        let results = ctx.par_map(&keys, |k| -> Result<_> {
            let sf = isotropic_spectrum(&ctx.forecast(k)?)?;
            let sv = isotropic_spectrum(&ctx.verification(k)?)?;
            Ok((sfi(&sf, &sv)?, effective_resolution(&sf, &sv)?, sf, sv))
        });
        let mut ok = Vec::new();
        let mut ok_keys = Vec::new();
        for (k, r) in keys.iter().zip(results) {
            match r {
                Ok(v) => {
                    ok_keys.push(k.clone());
                    ok.push(v);
                }
                Err(e) => self.skip(Metric::Spectra, cell_label(k), e),
            }
        }
        let mut groups = BTreeMap::new();
        for ((model, lead), items) in group_by_model_lead(&ok_keys, ok) {
            let fs: Vec<Spectrum> = items.iter().map(|i| i.2.clone()).collect();
            let vs: Vec<Spectrum> = items.iter().map(|i| i.3.clone()).collect();
            let (forecast, verify) = match (mean_spectrum(&fs), mean_spectrum(&vs)) {
                (Ok(f), Ok(v)) => (f, v),
                (Err(e), _) | (_, Err(e)) => {
                    self.skip(Metric::Spectra, format!("{model}/{variable}/+{lead}h"), e);
                    continue;
                }
            };
            let sfis: Vec<f64> = items.iter().map(|i| i.0).collect();
            let leffs: Vec<f64> = items.iter().map(|i| i.1.normalized).collect();
            let shells: Vec<f64> = items.iter().map(|i| i.1.shell as f64).collect();
            groups.insert(
                (model, lead),
                SpectraGroup {
                    forecast,
                    verify,
                    sfi: mean_ci(&sfis),
                    l_eff: mean_ci(&leffs),
                    l_eff_shell: stats::mean(&shells),
                    n: items.len(),
                },
            );
        }
        self.spectra.insert(variable, groups);
    }

    fn write_spectra(&mut self) -> Result<Vec<PathBuf>> {
        let mut spectra = Table::new(&["model", "variable", "lead_hours", "k", "forecast_energy", "verification_energy"]);
        let mut ratios = Table::new(&["model", "variable", "lead_hours", "k", "ratio"]);
        let mut summary = Table::new(&[
            "model",
            "variable",
            "lead_hours",
            "sfi",
            "sfi_ci",
            "l_eff",
            "l_eff_ci",
            "l_eff_shell",
            "n",
        ]);
        for &variable in self.ctx.variables() {
            self.ensure_spectra(variable);
            for ((model, lead), g) in &self.spectra[&variable] {
                let (v, l) = (variable.to_string(), lead.to_string());
                for (k, e) in g.forecast.iter() {
                    spectra.push(vec![
                        model.clone(),
                        v.clone(),
                        l.clone(),
                        k.to_string(),
                        num(e),
                        num(g.verify.energy(k)),
                    ]);
                }
                let ratio = spectral_ratio(&g.forecast, &g.verify)?;
                for (i, r) in ratio.ratio.iter().enumerate() {
                    ratios.push(vec![model.clone(), v.clone(), l.clone(), (i + 1).to_string(), opt(*r)]);
                }
                summary.push(vec![
                    model.clone(),
                    v,
                    l,
                    num(g.sfi.0),
                    num(g.sfi.1),
                    num(g.l_eff.0),
                    num(g.l_eff.1),
                    num(g.l_eff_shell),
                    g.n.to_string(),
                ]);
            }
        }
        let paths = [self.out("spectra.csv"), self.out("ratios.csv"), self.out("spectral_summary.csv")];
        write_csv(&paths[0], self.seed(), &spectra)?;
        write_csv(&paths[1], self.seed(), &ratios)?;
        write_csv(&paths[2], self.seed(), &summary)?;
        Ok(paths.to_vec())
    }

    // ---- skill ----

    fn write_skill(&mut self) -> Result<Vec<PathBuf>> {
        #[derive(Serialize)]
        struct Card {
            variable: Variable,
            metric: &'static str,
            /// Rank 1 is best: lowest RMSE, highest ACC.
            scorecard: Scorecard,
        }
        let ctx = self.ctx;
        let centered = ctx.config.diagnostics.acc_centered;
        let mut table = Table::new(&["model", "variable", "lead_hours", "metric", "mean", "ci_half_width", "n"]);
        let mut cards = Vec::new();
        for &variable in ctx.variables() {
            let clim = ctx.climatology(variable);
            let keys = ctx.keys(variable);
            let results = ctx.par_map(&keys, |k| -> Result<(f64, Option<Result<f64>>)> {
                let f = ctx.forecast(k)?;
                let v = ctx.verification(k)?;
                Ok((rmse(&f, &v, None)?, clim.map(|c| acc(&f, &v, c, centered))))
            });
            let mut samples: BTreeMap<(&str, &String), BTreeMap<u32, Vec<f64>>> = BTreeMap::new();
            for (k, r) in keys.iter().zip(results) {
                match r {
                    Ok((e, a)) => {
                        samples.entry(("rmse", &k.model)).or_default().entry(k.lead_hours).or_default().push(e);
                        match a {
                            Some(Ok(a)) => {
                                samples.entry(("acc", &k.model)).or_default().entry(k.lead_hours).or_default().push(a)
                            }
                            Some(Err(err)) => self.skip(Metric::Skill, format!("{} (acc)", cell_label(k)), err),
                            None => {}
                        }
                    }
                    Err(err) => self.skip(Metric::Skill, cell_label(k), err),
                }
            }
            let mut by_metric: BTreeMap<&str, Vec<MetricSeries>> = BTreeMap::new();
            for ((metric, model), s) in &samples {
                let series = MetricSeries::from_samples(model.as_str(), variable, s)?;
                for i in 0..series.leads.len() {
                    table.push(vec![
                        model.to_string(),
                        variable.to_string(),
                        series.leads[i].to_string(),
                        metric.to_string(),
                        num(series.mean[i]),
                        num(series.ci_half_width[i]),
                        series.n[i].to_string(),
                    ]);
                }
                by_metric.entry(metric).or_default().push(series);
            }
            for (metric, mut series) in by_metric {
                if metric == "acc" {
                    for s in &mut series {
                        s.mean.iter_mut().for_each(|m| *m = 1.0 - *m);
                    }
                }
                cards.push(Card {
                    variable,
                    metric,
                    scorecard: scorecard(&series),
                });
            }
        }
        let paths = [self.out("skill.csv"), self.out("scorecard.json")];
        write_csv(&paths[0], self.seed(), &table)?;
        write_json(&paths[1], self.seed(), "scorecard", &cards)?;
        Ok(paths.to_vec())
    }

    // ---- consensus ----

    fn write_consensus(&mut self) -> Result<Vec<PathBuf>> {
        struct Cell {
            ecr: f64,
            r: f64,
            med: BTreeMap<PairGroup, Vec<Option<f64>>>,
        }
        let ctx = self.ctx;
        let mut ecr_table = Table::new(&["variable", "lead_hours", "ecr_mean", "ecr_ci", "pairwise_r_mean", "n"]);
        let mut med_table = Table::new(&["variable", "lead_hours", "group", "k", "med_mean"]);
        for &variable in ctx.variables() {
            let mut groups: BTreeMap<(u32, DateTime<Utc>), Vec<ForecastKey>> = BTreeMap::new();
            for k in ctx.keys(variable) {
                groups.entry((k.lead_hours, k.init_time)).or_default().push(k);
            }
            let groups: Vec<_> = groups.into_iter().collect();
            let results = ctx.par_map(&groups, |(_, keys)| -> Result<Cell> {
                let mut fields = Vec::new();
                for k in keys {
                    if let (Ok(f), Ok(v)) = (ctx.forecast(k), ctx.verification(k)) {
                        fields.push((k.model.as_str(), ctx.family(&k.model), f, v));
                    }
                }
                let errors = ErrorEnsemble::from_pairs(fields.iter().map(|(m, fam, f, v)| (*m, *fam, f, v)))?;
                let spectra = error_spectra(&errors)?;
                let mut med = BTreeMap::new();
                for g in PairGroup::ALL {
                    if let Ok(c) = med_from_spectra(&errors, &spectra, g) {
                        med.insert(g, c.med);
                    }
                }
                Ok(Cell {
                    ecr: ecr(&errors)?,
                    r: pairwise_error_correlation(&errors)?,
                    med,
                })
            });
            let mut per_lead: BTreeMap<u32, Vec<Cell>> = BTreeMap::new();
            for (((lead, init), _), r) in groups.iter().zip(results) {
                match r {
                    Ok(c) => per_lead.entry(*lead).or_default().push(c),
                    Err(e) => self.skip(
                        Metric::Consensus,
                        format!("{variable}/{}/+{lead}h", init.format("%Y-%m-%dT%H:%MZ")),
                        e,
                    ),
                }
            }
            for (lead, cells) in per_lead {
                let ecrs: Vec<f64> = cells.iter().map(|c| c.ecr).collect();
                let rs: Vec<f64> = cells.iter().map(|c| c.r).collect();
                let (m, ci) = mean_ci(&ecrs);
                ecr_table.push(vec![
                    variable.to_string(),
                    lead.to_string(),
                    num(m),
                    num(ci),
                    num(stats::mean(&rs)),
                    cells.len().to_string(),
                ]);
                for g in PairGroup::ALL {
                    let curves: Vec<&Vec<Option<f64>>> = cells.iter().filter_map(|c| c.med.get(&g)).collect();
                    let Some(k_max) = curves.iter().map(|c| c.len()).min() else {
                        continue;
                    };
                    for k in 0..k_max {
                        let vals: Vec<f64> = curves.iter().filter_map(|c| c[k]).collect();
                        let mean = (!vals.is_empty()).then(|| stats::mean(&vals));
                        med_table.push(vec![
                            variable.to_string(),
                            lead.to_string(),
                            g.as_str().to_string(),
                            (k + 1).to_string(),
                            opt(mean),
                        ]);
                    }
                }
            }
        }
        let paths = [self.out("ecr.csv"), self.out("med.csv")];
        write_csv(&paths[0], self.seed(), &ecr_table)?;
        write_csv(&paths[1], self.seed(), &med_table)?;
        Ok(paths.to_vec())
    }

    // ---- dynamics ----

    fn asi_window_days(&self) -> f64 {
        self.ctx
            .config
            .diagnostics
            .asi_window_days
            .unwrap_or_else(|| f64::from(self.ctx.leads().last().copied().unwrap_or(0)) / 24.0)
    }

    fn ensure_dynamics(&mut self) {
        if self.dynamics.is_some() {
            return;
        }
        let ctx = self.ctx;
        let d = &ctx.config.diagnostics;
        let keys = ctx.keys(d.growth_variable);
        let errors = ctx.par_map(&keys, |k| rmse(&ctx.forecast(k)?, &ctx.verification(k)?, None));
        let mut rmse_samples: BTreeMap<String, BTreeMap<u32, Vec<f64>>> = BTreeMap::new();
        for (k, r) in keys.iter().zip(errors) {
            match r {
                Ok(e) => rmse_samples
                    .entry(k.model.clone())
                    .or_default()
                    .entry(k.lead_hours)
                    .or_default()
                    .push(e),
                Err(e) => self.skip(Metric::Dynamics, cell_label(k), e),
            }
        }

        let runs: Vec<(String, DateTime<Utc>)> = ctx
            .models()
            .iter()
            .flat_map(|m| ctx.init_times().into_iter().map(move |t| (m.clone(), t)))
            .collect();
        let ke = ctx.par_map(&runs, |(model, init)| -> Result<BTreeMap<u32, f64>> {
            let mut raw = BTreeMap::new();
            for &lead in ctx.leads() {
                let ku = Self::key(model, Variable::U500, *init, lead);
                let kv = Self::key(model, Variable::V500, *init, lead);
                match (ctx.has_forecast(&ku), ctx.has_forecast(&kv)) {
                    (true, true) => {
                        raw.insert(lead, kinetic_energy(&ctx.forecast(&ku)?, &ctx.forecast(&kv)?)?);
                    }
                    (false, false) => {}
                    _ => return Err(Error::MissingComponent(lead)),
                }
            }
            Ok(raw)
        });
        let mut ke_samples: BTreeMap<String, BTreeMap<u32, Vec<f64>>> = BTreeMap::new();
        for ((model, init), r) in runs.iter().zip(ke) {
            let label = format!("{model}/ke/{}", init.format("%Y-%m-%dT%H:%MZ"));
            match r {
                Ok(raw) if raw.is_empty() => {}
                Ok(raw) => {
                    let base = *raw.values().next().expect("nonempty");
                    if !(base > 0.0) {
                        self.skip(Metric::Dynamics, label, "initial kinetic energy is zero");
                        continue;
                    }
                    for (lead, k) in raw {
                        ke_samples.entry(model.clone()).or_default().entry(lead).or_default().push(k / base);
                    }
                }
                Err(e) => self.skip(Metric::Dynamics, label, e),
            }
        }

        let window = self.asi_window_days();
        let mut rows = BTreeMap::new();
        for model in ctx.models() {
            let mean_of = |s: Option<&BTreeMap<u32, Vec<f64>>>| -> BTreeMap<u32, f64> {
                s.map(|m| m.iter().map(|(l, xs)| (*l, stats::mean(xs))).collect())
                    .unwrap_or_default()
            };
            let rmse = mean_of(rmse_samples.get(model));
            let ke_ratio = mean_of(ke_samples.get(model));
            let growth = match fit_lyapunov(&rmse, d.growth_window_days) {
                Ok(g) => Some(g),
                Err(e) => {
                    self.skip(Metric::Dynamics, format!("{model}/growth"), e);
                    None
                }
            };
            let drift = match asi(&ke_ratio, window) {
                Ok(a) => Some(a),
                Err(e) => {
                    self.skip(Metric::Dynamics, format!("{model}/asi"), e);
                    None
                }
            };
            rows.insert(
                model.clone(),
                DynamicsRow {
                    rmse,
                    ke_ratio,
                    growth,
                    drift,
                },
            );
        }
        self.dynamics = Some(rows);
    }

    fn write_dynamics(&mut self) -> Result<Vec<PathBuf>> {
        self.ensure_dynamics();
        let mut summary = Table::new(&[
            "model",
            "lambda_eff",
            "tau_d_hours",
            "tau_d_norm",
            "growth_r2",
            "gamma",
            "asi",
            "asi_window_days",
        ]);
        let mut series = Table::new(&["model", "lead_hours", "rmse", "ke_ratio"]);
        for (model, row) in self.dynamics.as_ref().expect("computed") {
            let g = row.growth.as_ref();
            let a = row.drift.as_ref();
            summary.push(vec![
                model.clone(),
                opt(g.map(|g| g.lambda_eff)),
                opt(g.and_then(|g| g.tau_d_hours)),
                opt(g.map(|g| g.tau_d_norm)),
                opt(g.map(|g| g.r2)),
                opt(a.map(|a| a.gamma)),
                opt(a.map(|a| a.asi)),
                opt(a.map(|a| a.window_days)),
            ]);
            let leads: std::collections::BTreeSet<u32> = row.rmse.keys().chain(row.ke_ratio.keys()).copied().collect();
            for lead in leads {
                series.push(vec![
                    model.clone(),
                    lead.to_string(),
                    opt(row.rmse.get(&lead).copied()),
                    opt(row.ke_ratio.get(&lead).copied()),
                ]);
            }
        }
        let paths = [self.out("dynamics.csv"), self.out("dynamics_series.csv")];
        write_csv(&paths[0], self.seed(), &summary)?;
        write_csv(&paths[1], self.seed(), &series)?;
        Ok(paths.to_vec())
    }

    // ---- balance ----

    fn ensure_balance(&mut self) {
        if self.balance.is_some() {
            return;
        }
        let ctx = self.ctx;
        let cfg = ctx.config.diagnostics.balance;
        let keys = ctx.keys(Variable::Z500);
        let results = ctx.par_map(&keys, |k| -> Result<crate::balance::BalanceReport> {
            let load = |v: Variable| ctx.forecast(&Self::key(&k.model, v, k.init_time, k.lead_hours));
            let fields: Vec<ScalarField> = BALANCE_VARIABLES.iter().map(|v| load(*v)).collect::<Result<_>>()?;
            let t500 = load(Variable::T500).ok();
            let t_layer = layer_temperature(&fields[6], t500.as_ref())?;
            balance_report(
                &BalanceFields {
                    u500: &fields[0],
                    v500: &fields[1],
                    u850: &fields[2],
                    v850: &fields[3],
                    z500: &fields[4],
                    z850: &fields[5],
                    t_layer: &t_layer,
                },
                &cfg,
            )
        });
        let mut ok_keys = Vec::new();
        let mut ok = Vec::new();
        for (k, r) in keys.iter().zip(results) {
            match r {
                Ok(rep) => {
                    ok_keys.push(k.clone());
                    ok.push(rep);
                }
                Err(e) => self.skip(Metric::Balance, cell_label(k).replace("/z500/", "/balance/"), e),
            }
        }
        let mut out = BTreeMap::new();
        for (ml, reports) in group_by_model_lead(&ok_keys, ok) {
            let mut g = BalanceGroup::default();
            for r in &reports {
                let subs = [r.geostrophic, r.nondivergence, r.thermal, r.hydrostatic];
                for (i, sub) in subs.iter().enumerate() {
                    g.scores[i] += sub.score;
                    g.ratios[i] += sub.ratio;
                }
                g.composite += r.composite;
            }
            let n = reports.len() as f64;
            g.scores.iter_mut().chain(g.ratios.iter_mut()).for_each(|x| *x /= n);
            g.composite /= n;
            g.n = reports.len();
            out.insert(ml, g);
        }
        self.balance = Some(out);
    }

    fn write_balance(&mut self) -> Result<Vec<PathBuf>> {
        self.ensure_balance();
        let mut t = Table::new(&[
            "model",
            "lead_hours",
            "pcs_geo",
            "pcs_ndiv",
            "pcs_thermal",
            "pcs_hydro",
            "pcs_composite",
            "agr",
            "ndr",
            "thermal_ratio",
            "hydrostatic_error",
            "n",
        ]);
        for ((model, lead), g) in self.balance.as_ref().expect("computed") {
            let mut row = vec![model.clone(), lead.to_string()];
            row.extend(g.scores.iter().map(|x| num(*x)));
            row.push(num(g.composite));
            row.extend(g.ratios.iter().map(|x| num(*x)));
            row.push(g.n.to_string());
            t.push(row);
        }
        let path = self.out("balance.csv");
        write_csv(&path, self.seed(), &t)?;
        Ok(vec![path])
    }

    // ---- extremes ----

    fn ensure_extremes(&mut self) {
        if self.extremes.is_some() {
            return;
        }
        let ctx = self.ctx;
        let d = &ctx.config.diagnostics;
        let variable = d.extremes_variable;
        let Some(clim) = ctx.climatology(variable) else {
            self.skip(Metric::Extremes, variable.to_string(), format!("no {variable} climatology configured"));
            self.extremes = Some(BTreeMap::new());
            return;
        };
        let mut groups: BTreeMap<ModelLead, Vec<ForecastKey>> = BTreeMap::new();
        for k in ctx.keys(variable) {
            groups.entry((k.model.clone(), k.lead_hours)).or_default().push(k);
        }
        let groups: Vec<_> = groups.into_iter().collect();
        let tail = d.tail;
        type Outcome = (Result<TailCurve>, Vec<f64>, Vec<(String, Error)>);
        let results = ctx.par_map(&groups, |(_, keys)| -> Outcome {
            let mut acc = TailAccumulator::new(tail).expect("validated tail config");
            let mut scores = Vec::new();
            let mut failures = Vec::new();
            let mut added = 0;
            for k in keys {
                let step = (|| -> Result<(usize, Result<f64>)> {
                    let f = ctx.forecast(k)?;
                    let v = ctx.verification(k)?;
                    Ok((acc.add(&f, &v, clim)?, ees(&f, &v, clim, &tail)))
                })();
                match step {
                    Ok((n, score)) => {
                        added += n;
                        match score {
                            Ok(s) => scores.push(s),
                            Err(e) => failures.push((format!("{} (ees)", cell_label(k)), e)),
                        }
                    }
                    Err(e) => failures.push((cell_label(k), e)),
                }
            }
            let curve = if added == 0 { Err(Error::NoExtremes) } else { acc.finish() };
            (curve, scores, failures)
        });
        let mut out = BTreeMap::new();
        for (((model, lead), _), (curve, scores, failures)) in groups.into_iter().zip(results) {
            for (cell, e) in failures {
                self.skip(Metric::Extremes, cell, e);
            }
            let curve = match curve {
                Ok(c) => Some(c),
                Err(e) => {
                    self.skip(Metric::Extremes, format!("{model}/{variable}/+{lead}h (tail)"), e);
                    None
                }
            };
            out.insert(
                (model, lead),
                ExtremesGroup {
                    curve,
                    ees: (!scores.is_empty()).then(|| mean_ci(&scores)),
                    n_ees: scores.len(),
                },
            );
        }
        self.extremes = Some(out);
    }

    fn write_extremes(&mut self) -> Result<Vec<PathBuf>> {
        self.ensure_extremes();
        let groups = self.extremes.as_ref().expect("computed");
        let mut curves = Table::new(&["model", "lead_hours", "bin_center", "mean_bias", "count"]);
        let mut summary = Table::new(&["model", "lead_hours", "alpha", "r2", "ees", "ees_ci", "n"]);
        let mut per_model: BTreeMap<&str, BTreeMap<u32, Option<TailCurve>>> = BTreeMap::new();
        for ((model, lead), g) in groups {
            per_model.entry(model).or_default().insert(*lead, g.curve.clone());
            if let Some(c) = &g.curve {
                for (i, center) in c.bin_centers.iter().enumerate() {
                    curves.push(vec![
                        model.clone(),
                        lead.to_string(),
                        num(*center),
                        opt(c.mean_bias[i]),
                        c.counts[i].to_string(),
                    ]);
                }
            }
        }
        for (model, leads) in &per_model {
            let evo = alpha_evolution(leads);
            for lead in leads.keys() {
                let g = &groups[&(model.to_string(), *lead)];
                let fit = evo.points.get(lead);
                summary.push(vec![
                    model.to_string(),
                    lead.to_string(),
                    opt(fit.map(|f| f.0)),
                    opt(fit.map(|f| f.1)),
                    opt(g.ees.map(|e| e.0)),
                    opt(g.ees.map(|e| e.1)),
                    g.n_ees.to_string(),
                ]);
            }
        }
        let paths = [self.out("tail_curves.csv"), self.out("tail_summary.csv")];
        write_csv(&paths[0], self.seed(), &curves)?;
        write_csv(&paths[1], self.seed(), &summary)?;
        Ok(paths.to_vec())
    }

    // ---- hmas ----

    fn write_hmas(&mut self) -> Result<Vec<PathBuf>> {
        let ctx = self.ctx;
        let spectral_var = ctx.config.diagnostics.spectral_variable;
        self.ensure_spectra(spectral_var);
        self.ensure_dynamics();
        self.ensure_balance();
        self.ensure_extremes();
        let mut cells = Vec::new();
        let mut gaps = Vec::new();
        for model in ctx.models() {
            for &lead in ctx.leads() {
                let ml = (model.clone(), lead);
                let spec = self.spectra[&spectral_var].get(&ml);
                let dynamics = self.dynamics.as_ref().and_then(|d| d.get(model));
                let tau_d = dynamics.and_then(|d| d.growth.map(|g| g.tau_d_norm));
                let asi = dynamics.and_then(|d| d.drift.map(|a| a.asi));
                let ees = self.extremes.as_ref().and_then(|e| e.get(&ml)).and_then(|g| g.ees.map(|e| e.0));
                let pcs = self.balance.as_ref().and_then(|b| b.get(&ml)).map(|g| g.composite);
                let named = [
                    ("sfi", spec.map(|s| s.sfi.0)),
                    ("l_eff", spec.map(|s| s.l_eff.0)),
                    ("tau_d", tau_d),
                    ("ees", ees),
                    ("pcs", pcs),
                    ("asi", asi),
                ];
                let missing: Vec<&str> = named.iter().filter(|(_, v)| v.is_none()).map(|(n, _)| *n).collect();
                if !missing.is_empty() {
                    gaps.push((format!("{model}/+{lead}h"), format!("missing {}", missing.join(", "))));
                    continue;
                }
                cells.push(HmasCell {
                    model: model.clone(),
                    lead_hours: lead,
                    inputs: HmasInputs::from_array(named.map(|(_, v)| v.expect("checked"))),
                    published: None,
                });
            }
        }
        for (cell, reason) in gaps {
            self.skip(Metric::Hmas, cell, reason);
        }
        let tables = build_hmas_tables(&cells, &ctx.config.diagnostics.hmas_schemes)?;
        write_hmas_reports(&ctx.config.out_dir, self.seed(), &tables)
    }

    // ---- sfs ----

    fn write_sfs(&mut self) -> Result<Vec<PathBuf>> {
        let ctx = self.ctx;
        let cfg = ctx.config.diagnostics.sfs.clone();
        let mut table = Table::new(&[
            "model",
            "loss",
            "lead_hours",
            "sfi_predicted",
            "coverage",
            "information",
            "sfs",
            "h_ks_bits_per_day",
            "i0_bits",
        ]);
        let path = self.out("sfs.csv");
        let Some(&lead) = cfg.lead_hours.as_ref().or(ctx.leads().last()) else {
            write_csv(&path, self.seed(), &table)?;
            return Ok(vec![path]);
        };
        let Some(i0) = cfg.i0 else {
            self.skip(Metric::Sfs, "all", "diagnostics.sfs.i0 is not set");
            write_csv(&path, self.seed(), &table)?;
            return Ok(vec![path]);
        };
        let h_ks = match cfg.h_ks {
            Some(h) => Some(h),
            None => {
                self.ensure_dynamics();
                let rates: Vec<f64> = self
                    .dynamics
                    .as_ref()
                    .expect("computed")
                    .values()
                    .filter_map(|d| d.growth.map(|g| g.lambda_eff))
                    .collect();
                let mean = (!rates.is_empty()).then(|| stats::mean(&rates) * std::f64::consts::LOG2_E);
                mean.filter(|h| *h > 0.0)
            }
        };
        let Some(h_ks) = h_ks else {
            self.skip(Metric::Sfs, "all", "no entropy rate configured and none could be estimated");
            write_csv(&path, self.seed(), &table)?;
            return Ok(vec![path]);
        };

        // Coverage samples: verification values at the evaluation valid times.
        let mut coverage = Vec::new();
        for range in &cfg.coverage {
            let mut samples = Vec::new();
            for init in ctx.init_times() {
                let valid = init + Duration::hours(i64::from(lead));
                if let Some(field) = ctx.verification_at(range.variable, valid) {
                    match field {
                        Ok(f) => samples.extend_from_slice(f.values()),
                        Err(e) => self.skip(Metric::Sfs, format!("{}/{valid}", range.variable), e),
                    }
                }
            }
            coverage.push(CoverageInput {
                variable: range.variable.to_string(),
                train_min: range.train_min,
                train_max: range.train_max,
                samples,
            });
        }

        let models: Vec<String> = ctx.models().to_vec();
        let results = ctx.par_map(&models, |model| -> Result<(Spectrum, Spectrum)> {
            let mut errs = Vec::new();
            let mut truths = Vec::new();
            for init in ctx.init_times() {
                let k = Self::key(model, cfg.variable, init, lead);
                if !ctx.has_forecast(&k) {
                    continue;
                }
                let f = ctx.forecast(&k)?;
                let v = ctx.verification(&k)?;
                let e = f.with_values(f.values().iter().zip(v.values()).map(|(a, b)| a - b).collect())?;
                errs.push(isotropic_spectrum(&e)?);
                truths.push(isotropic_spectrum(&v)?);
            }
            Ok((mean_spectrum(&errs)?, mean_spectrum(&truths)?))
        });
        for (model, r) in models.iter().zip(results) {
            let label = format!("{model}/{}/+{lead}h", cfg.variable);
            let loss = match ctx.loss(model).map(str::to_ascii_lowercase).as_deref() {
                Some("mse") => LossFamily::Mse,
                Some("crps") => LossFamily::Crps,
                Some("score") => LossFamily::Score,
                other => {
                    self.skip(Metric::Sfs, label, format!("unknown loss tag {other:?}"));
                    continue;
                }
            };
            let (err, truth) = match r {
                Ok(x) => x,
                Err(e) => {
                    self.skip(Metric::Sfs, label, e);
                    continue;
                }
            };
            // Error energy above the truth's comes from displacement, not
            // from unpredictable variance; cap it so the MSE prediction stays
            // defined.
            let var: Vec<f64> = err.energies().iter().zip(truth.energies()).map(|(e, t)| e.min(*t)).collect();
            let report = ConditionalVarianceSpectrum::new(var, lead).and_then(|var_spec| {
                sfs(&SfsInputs {
                    loss,
                    var_spec: &var_spec,
                    truth: &truth,
                    sample_noise: Some(&err),
                    coverage: &coverage,
                    budget: InformationBudget {
                        h_ks,
                        i0,
                        tau_days: f64::from(lead) / 24.0,
                    },
                    weights: cfg.weights,
                })
            });
            match report {
                Ok(r) => table.push(vec![
                    model.clone(),
                    format!("{loss:?}").to_lowercase(),
                    lead.to_string(),
                    num(r.sfi_predicted),
                    num(r.coverage),
                    num(r.information),
                    num(r.sfs),
                    num(h_ks),
                    num(i0),
                ]),
                Err(e) => self.skip(Metric::Sfs, label, e),
            }
        }
        write_csv(&path, self.seed(), &table)?;
        Ok(vec![path])
    }
}
