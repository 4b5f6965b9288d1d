//! Acceptance checks for the verification engine, one line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so every criterion reports
//! PASS or FAIL even when an earlier one fails; the process exits nonzero if
//! any does.

use std::f64::consts::LN_2;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use chrono::{TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use wxdiag::balance::{geostrophic_score, hydrostatic_score, BalanceConfig};
use wxdiag::composite::{dominates, kendall_w, pareto_front, read_metrics_csv, WeightScheme};
use wxdiag::consensus::{ecr, ErrorEnsemble, ErrorMember};
use wxdiag::dynamics::{asi, asi_from_gamma};
use wxdiag::extremes::{tail_curve, TailConfig};
use wxdiag::grid::{FieldMeta, LatLonGrid, ScalarField, Variable};
use wxdiag::pipeline::{build_hmas_tables, run, HmasCell, RunConfig};
use wxdiag::skill::Climatology;
use wxdiag::spectral::{effective_resolution, fit_power_law, isotropic_spectrum, sfi, Spectrum};
use wxdiag::synth::dataset::{write_dataset, DatasetSpec};
use wxdiag::synth::{
    balanced_state, drifting_ke_series, ensemble_with_conditional_variance, field_with_spectrum, oracle_grid,
    perturb_winds, planted_tail_bias, shifted_wave_pair, zonal_mse, BalancedPattern, SpectralRecipe,
};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if $cond {
        } else {
            return Err(format!($($fmt)+));
        }
    };
}

fn e<E: std::fmt::Display>(err: E) -> String {
    err.to_string()
}

fn meta(variable: Variable) -> FieldMeta {
    FieldMeta::new(variable, "oracle", Utc.with_ymd_and_hms(2023, 7, 10, 0, 0, 0).unwrap(), 0)
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v.sqrt())
}

/// Truth realizations drawn around a known conditional mean carry exactly
/// the planted conditional variance more energy per shell than the mean.
fn deficit_identity() -> Outcome {
    let start = Instant::now();
    let (members, seeds, k_max) = (200, 20u64, 60);
    let grid = oracle_grid();
    let var = SpectralRecipe::power_law(k_max, -2.0, 1.0, 0).map_err(e)?;
    let deficits: Vec<Vec<f64>> = (0..seeds)
        .into_par_iter()
        .map(|seed| -> Result<Vec<f64>, String> {
            let mean = SpectralRecipe::power_law(k_max, -3.0, 10.0, 1000 + seed).map_err(e)?;
            let var = SpectralRecipe { seed, ..var.clone() };
            let ens = ensemble_with_conditional_variance(&mean, &var, members, grid.clone(), meta(Variable::Z500))
                .map_err(e)?;
            let mean_spec = isotropic_spectrum(&ens.mean).map_err(e)?;
            let mut truth = vec![0.0; mean_spec.k_max()];
            for m in &ens.members {
                for (a, x) in truth.iter_mut().zip(isotropic_spectrum(m).map_err(e)?.energies()) {
                    *a += x / members as f64;
                }
            }
            Ok(truth.iter().zip(mean_spec.energies()).map(|(t, m)| t - m).collect())
        })
        .collect::<Result<_, _>>()?;
    let mut worst: f64 = 0.0;
    for k in 2..=k_max {
        let d: Vec<f64> = deficits.iter().map(|s| s[k - 1]).collect();
        let (m, sd) = mean_sd(&d);
        let se = sd / (seeds as f64).sqrt();
        let z = (m - var.energy[k - 1]).abs() / se;
        worst = worst.max(z);
        ensure!(z <= 3.0, "shell {k}: deficit {m:.4e} vs planted {:.4e} ({z:.2} SE)", var.energy[k - 1]);
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 60.0, "took {secs:.1} s");
    Ok(format!("shells 2-{k_max}, worst {worst:.2} SE, {secs:.1} s"))
}

/// A phase-shifted wave costs A^2 (1 - cos(l0 dtheta)), growing as l0^2 for
/// small shifts.
fn double_penalty() -> Outcome {
    let grid = Arc::new(LatLonGrid::regular(8, 720, false).map_err(e)?);
    let m = meta(Variable::Z500);
    let cases = [
        (1.0, 1, 0.3),
        (1.0, 2, 0.1),
        (2.0, 3, 0.5),
        (1.0, 5, 0.05),
        (0.5, 8, 0.2),
        (1.0, 10, 0.1),
        (3.0, 15, 0.02),
        (1.0, 20, 0.15),
        (1.0, 40, 0.01),
        (2.0, 100, 0.03),
    ];
    let mut worst: f64 = 0.0;
    for (a, l0, shift) in cases {
        let (t, f) = shifted_wave_pair(a, l0, shift, grid.clone(), m.clone()).map_err(e)?;
        let mse = zonal_mse(&t, &f).map_err(e)?;
        let expected = a * a * (1.0 - (f64::from(l0) * shift).cos());
        worst = worst.max((mse - expected).abs());
        ensure!((mse - expected).abs() < 1e-3, "l0={l0} shift={shift}: {mse} vs {expected}");
    }
    // Ratio of the cost at two wavenumbers against (l1/l0)^2.
    let (l0, l1) = (4, 12);
    let mut last = f64::INFINITY;
    let mut dev = f64::NAN;
    for shift in [0.1, 0.03, 0.01, 0.003, 0.001] {
        let (t0, f0) = shifted_wave_pair(1.0, l0, shift, grid.clone(), m.clone()).map_err(e)?;
        let (t1, f1) = shifted_wave_pair(1.0, l1, shift, grid.clone(), m.clone()).map_err(e)?;
        let ratio = zonal_mse(&t1, &f1).map_err(e)? / zonal_mse(&t0, &f0).map_err(e)? / f64::from(l1 / l0).powi(2);
        dev = (ratio - 1.0).abs();
        ensure!(dev <= last, "scaling ratio not converging at shift {shift}: {ratio}");
        last = dev;
    }
    ensure!(dev < 0.01, "scaling ratio off by {dev}");
    Ok(format!("10 cases, worst abs error {worst:.1e}; l0^2 ratio within {dev:.1e}"))
}

fn hmas_day5() -> Outcome {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/hmas_day5.csv");
    let cells: Vec<HmasCell> = read_metrics_csv(&path).map_err(e)?.iter().map(HmasCell::from).collect();
    ensure!(cells.len() == 10, "{} rows", cells.len());
    let tables = build_hmas_tables(&cells, &[WeightScheme::default_scheme()]).map_err(e)?;
    let mut worst: f64 = 0.0;
    for r in &tables[0].rows {
        let d = r.abs_diff.ok_or("missing reference score")?;
        worst = worst.max(d);
        ensure!(d <= 1e-3 + 1e-12, "{}: {:.4} vs {:?}", r.model, r.hmas, r.published_hmas);
    }
    let get = |m: &str| tables[0].rows.iter().find(|r| r.model == m).map(|r| r.hmas);
    Ok(format!(
        "10 rows, worst {worst:.1e}; FCN3 {:.3}, FengWu {:.3}",
        get("FCN3").unwrap_or(f64::NAN),
        get("FengWu").unwrap_or(f64::NAN)
    ))
}

fn spectral_round_trip() -> Outcome {
    let grid = oracle_grid();
    let mut slopes = Vec::new();
    for seed in 0..5 {
        let recipe = SpectralRecipe::power_law(60, -3.0, 1.0, seed).map_err(e)?;
        let f = field_with_spectrum(&recipe, grid.clone(), meta(Variable::Z500)).map_err(e)?;
        let fit = fit_power_law(&isotropic_spectrum(&f).map_err(e)?, 4, 60).map_err(e)?;
        ensure!((fit.slope + 3.0).abs() <= 0.1, "seed {seed}: slope {}", fit.slope);
        slopes.push(fit.slope);
    }
    // Parseval against a direct sum over the area-weighted anomaly.
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for i in 0..50 {
        let nlat = rng.random_range(16..80);
        let nlon = rng.random_range(32..160);
        let grid = Arc::new(LatLonGrid::regular(nlat, nlon, i % 3 == 0).map_err(e)?);
        let values: Vec<f64> = (0..grid.len()).map(|_| 280.0 + 5.0 * rng.sample::<f64, _>(StandardNormal)).collect();
        let w = grid.row_weights();
        let wsum: f64 = w.iter().sum::<f64>() * nlon as f64;
        let wmean = values.iter().enumerate().map(|(j, v)| w[j / nlon] * v).sum::<f64>() / wsum;
        let g: Vec<f64> = values.iter().enumerate().map(|(j, v)| w[j / nlon].sqrt() * (v - wmean)).collect();
        let gmean = g.iter().sum::<f64>() / g.len() as f64;
        let direct = g.iter().map(|x| (x - gmean).powi(2)).sum::<f64>() / g.len() as f64;
        let f = ScalarField::new(grid, values, meta(Variable::T2m)).map_err(e)?;
        let rel = (isotropic_spectrum(&f).map_err(e)?.total() / direct - 1.0).abs();
        worst = worst.max(rel);
        ensure!(rel < 1e-8, "{nlat}x{nlon}: Parseval off by {rel:.2e}");
    }
    let (m, _) = mean_sd(&slopes);
    Ok(format!("mean slope {m:.3}; Parseval worst {worst:.1e} on 50 fields"))
}

fn sfi_contracts() -> Outcome {
    let a = Spectrum::from_fn(320, |k| (k as f64).powi(-3)).map_err(e)?;
    let same = sfi(&a, &a).map_err(e)?;
    ensure!(same == 1.0, "SFI(E, E) = {same}");
    let tenth = sfi(&a.scaled(0.1).map_err(e)?, &a).map_err(e)?;
    ensure!((tenth - 0.5).abs() < 1e-12, "SFI(0.1 E, E) = {tenth}");
    let inflated = a.scaled(50.0).map_err(e)?;
    let l = effective_resolution(&inflated, &a).map_err(e)?.normalized;
    let s = sfi(&inflated, &a).map_err(e)?;
    ensure!(l == 1.0 && s < 0.2, "inflated: l_eff {l}, SFI {s}");
    Ok(format!("SFI(E,E)=1, SFI(0.1E,E)={tenth:.12}, inflated l_eff={l} SFI={s:.3}"))
}

fn white(grid: &Arc<LatLonGrid>, sd: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..grid.len()).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect()
}

/// `e_m = s + n_m` with shared variance S and independent noise N gives
/// `ECR = (S + N/M) / (S + N)`.
fn ecr_analytics() -> Outcome {
    let grid = oracle_grid();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    for (s_var, n_var, m) in [(1.0, 1.0, 3), (1.0, 4.0, 5), (4.0, 1.0, 5), (0.0, 1.0, 4), (0.0, 2.0, 10)] {
        let shared = white(&grid, f64::sqrt(s_var), &mut rng);
        let members = (0..m)
            .map(|i| {
                let noise = white(&grid, f64::sqrt(n_var), &mut rng);
                let values = shared.iter().zip(noise).map(|(a, b)| a + b).collect();
                Ok(ErrorMember {
                    model: format!("m{i}"),
                    family: None,
                    error: ScalarField::new(grid.clone(), values, meta(Variable::Z500)).map_err(e)?,
                })
            })
            .collect::<Result<Vec<_>, String>>()?;
        let got = ecr(&ErrorEnsemble::new(members).map_err(e)?).map_err(e)?;
        let expected = (s_var + n_var / m as f64) / (s_var + n_var);
        let rel = (got / expected - 1.0).abs();
        worst = worst.max(rel);
        ensure!(rel < 0.02, "S={s_var} N={n_var} M={m}: {got} vs {expected}");
    }
    Ok(format!("5 cases incl. pure noise -> 1/M, worst {:.2}%", 100.0 * worst))
}

fn asi_closed_form() -> Outcome {
    // 0.7836 is the four-place rounding of 1 - 0.15 / ln 2 = 0.7835958...
    let v = asi_from_gamma(-0.01, 15.0);
    let exact = 1.0 - 0.15 / LN_2;
    ensure!((v - exact).abs() <= 1e-6, "ASI {v} vs {exact}");
    ensure!(format!("{v:.4}") == "0.7836", "ASI {v} does not round to 0.7836");
    let leads: Vec<u32> = (0..=15).map(|d| d * 24).collect();
    let fitted = asi(&drifting_ke_series(-0.01, &leads), 15.0).map_err(e)?;
    ensure!((fitted.asi - exact).abs() < 1e-6, "regressed ASI {}", fitted.asi);
    let flat = asi(&drifting_ke_series(0.0, &leads), 15.0).map_err(e)?;
    ensure!(flat.asi == 1.0 && asi_from_gamma(0.0, 15.0) == 1.0, "gamma=0 gives {}", flat.asi);
    Ok(format!("ASI(-0.01/day, 15 d) = {v:.7}; gamma=0 -> 1"))
}

fn balance_oracles() -> Outcome {
    let grid = Arc::new(LatLonGrid::regular(73, 144, true).map_err(e)?);
    let cfg = BalanceConfig::default();
    let s = balanced_state(grid, &cfg.constants, &BalancedPattern::default(), &meta(Variable::Z500)).map_err(e)?;
    let agr = geostrophic_score(&s.u500, &s.v500, &s.z500, &cfg).map_err(e)?.ratio;
    ensure!(agr < 1e-10, "AGR {agr:e}");
    let hydro = hydrostatic_score(&s.z500, &s.z850, &s.t_layer, &cfg).map_err(e)?.ratio;
    ensure!(hydro < 1e-10, "hydrostatic {hydro:e}");
    let mut worst: f64 = 0.0;
    for rho in [0.1, 0.3, 0.5] {
        let (u, v) = perturb_winds(&s.u500, &s.v500, rho, &cfg, 9).map_err(e)?;
        let got = geostrophic_score(&u, &v, &s.z500, &cfg).map_err(e)?.ratio;
        worst = worst.max((got / rho - 1.0).abs());
        ensure!((got / rho - 1.0).abs() < 0.05, "rho {rho}: AGR {got}");
    }
    Ok(format!("AGR {agr:.1e}, hydrostatic {hydro:.1e}; noise AGR within {:.2}%", 100.0 * worst))
}

/// Run on a 1-degree field: at 96 x 192 the per-seed spread (sd ~0.009) puts
/// the worst of 100 seeds just past 0.02 even though the estimator is
/// unbiased.
fn tail_regression() -> Outcome {
    let grid = Arc::new(LatLonGrid::regular(180, 360, false).map_err(e)?);
    let n = grid.len();
    let clim = Climatology::uniform(grid, Variable::T2m, vec![285.0; n], vec![1.0; n]).map_err(e)?;
    let cfg = TailConfig::default();
    let mut summary = Vec::new();
    for alpha in [0.0, 0.28, 0.44] {
        let estimates: Vec<f64> = (0..100u64)
            .into_par_iter()
            .map(|seed| -> Result<f64, String> {
                let (f, v) = planted_tail_bias(&clim, alpha, meta(Variable::T2m), seed).map_err(e)?;
                Ok(tail_curve(&f, &v, &clim, &cfg).map_err(e)?.alpha)
            })
            .collect::<Result<_, _>>()?;
        let worst = estimates.iter().map(|a| (a - alpha).abs()).fold(0.0, f64::max);
        let (m, _) = mean_sd(&estimates);
        ensure!(worst <= 0.02, "alpha {alpha}: worst seed off by {worst:.4} (mean {m:.4})");
        summary.push(format!("{alpha}: mean {m:.3} worst {worst:.3}"));
    }
    Ok(format!("100 seeds each; {}", summary.join(", ")))
}

fn pareto_and_kendall() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for i in 0..200 {
        let n = rng.random_range(1..40);
        let dims = rng.random_range(1..7);
        let coarse = i % 2 == 0;
        let pts: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                (0..dims)
                    .map(|_| if coarse { f64::from(rng.random_range(0..4u8)) } else { rng.random() })
                    .collect()
            })
            .collect();
        let brute: Vec<usize> = (0..n)
            .filter(|&a| !(0..n).any(|b| b != a && pts[b].iter().zip(&pts[a]).all(|(x, y)| x >= y) && pts[b] != pts[a]))
            .collect();
        let front = pareto_front(&pts).map_err(e)?;
        ensure!(front == brute, "instance {i}: {front:?} vs {brute:?}");
        ensure!(front.iter().all(|&a| !(0..n).any(|b| dominates(&pts[b], &pts[a]))), "instance {i}: dominated");
    }
    let same = vec![vec![1.0, 2.0, 3.0, 4.0, 5.0]; 4];
    let w = kendall_w(&same).map_err(e)?;
    ensure!((w - 1.0).abs() < 1e-15, "identical ranks give W = {w}");
    let mut worst: f64 = 0.0;
    for table in 0..50 {
        let m = rng.random_range(2..7);
        let n = rng.random_range(3..12);
        let ranks: Vec<Vec<f64>> = (0..m)
            .map(|_| {
                let mut r: Vec<f64> = (1..=n).map(f64::from).collect();
                for i in (1..r.len()).rev() {
                    r.swap(i, rng.random_range(0..=i));
                }
                r
            })
            .collect();
        let got = kendall_w(&ranks).map_err(e)?;
        let want = kendall_from_spearman(&ranks);
        worst = worst.max((got - want).abs());
        ensure!((got - want).abs() < 1e-12, "table {table}: {got} vs {want}");
    }
    Ok(format!("200 fronts exact; W=1 on identical ranks; 50 tables within {worst:.1e}"))
}

/// Without ties, `W = ((m - 1) mean_rho + 1) / m` where `mean_rho` is the
/// Spearman correlation averaged over all rater pairs.
fn kendall_from_spearman(ranks: &[Vec<f64>]) -> f64 {
    let m = ranks.len();
    let n = ranks[0].len() as f64;
    let mut total = 0.0;
    let mut pairs = 0.0;
    for a in 0..m {
        for b in a + 1..m {
            let d2: f64 = ranks[a].iter().zip(&ranks[b]).map(|(x, y)| (x - y).powi(2)).sum();
            total += 1.0 - 6.0 * d2 / (n * (n * n - 1.0));
            pairs += 1.0;
        }
    }
    let mean_rho = total / pairs;
    ((m as f64 - 1.0) * mean_rho + 1.0) / m as f64
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(e)?;
    let ds = write_dataset(dir.path(), &DatasetSpec::default()).map_err(e)?;
    let base = RunConfig::load(&ds.config).map_err(e)?;
    let mut outputs = Vec::new();
    for (name, workers) in [("a", 1), ("b", 1), ("c", 4)] {
        let mut cfg = base.clone();
        cfg.out_dir = dir.path().join(name);
        cfg.workers = Some(workers);
        run(cfg).map_err(e)?;
        let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir.path().join(name))
            .map_err(e)?
            .map(|entry| {
                let p = entry.map_err(e)?.path();
                Ok((p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).map_err(e)?))
            })
            .collect::<Result<_, String>>()?;
        files.sort();
        outputs.push(files);
    }
    ensure!(outputs[0].len() >= 18, "only {} reports", outputs[0].len());
    for (other, label) in [(&outputs[1], "repeat run"), (&outputs[2], "4 workers")] {
        for ((na, a), (nb, b)) in outputs[0].iter().zip(other.iter()) {
            ensure!(na == nb && a == b, "{label}: {na} differs");
        }
        ensure!(other.len() == outputs[0].len(), "{label}: different report set");
    }
    Ok(format!("{} reports byte-identical across repeats and 1 vs 4 workers", outputs[0].len()))
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("deficit identity", deficit_identity),
        ("double penalty", double_penalty),
        ("HMAS day-5 arithmetic", hmas_day5),
        ("spectral round trip", spectral_round_trip),
        ("SFI / l_eff contracts", sfi_contracts),
        ("ECR analytics", ecr_analytics),
        ("ASI closed form", asi_closed_form),
        ("balance oracles", balance_oracles),
        ("tail regression", tail_regression),
        ("Pareto and Kendall", pareto_and_kendall),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {why}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
