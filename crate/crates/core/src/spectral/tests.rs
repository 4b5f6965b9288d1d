use std::sync::Arc;

use chrono::{TimeZone, Utc};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::grid::{FieldMeta, Variable};
use crate::synth::{ensemble_with_conditional_variance, oracle_grid, SpectralRecipe};

fn meta() -> FieldMeta {
    FieldMeta::new(Variable::Z500, "m", Utc.with_ymd_and_hms(2023, 1, 1, 0, 0, 0).unwrap(), 0)
}

fn random_field(grid: &Arc<LatLonGrid>, seed: u64) -> ScalarField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..grid.len()).map(|_| rng.random_range(-3.0..3.0)).collect();
    ScalarField::new(grid.clone(), values, meta()).unwrap()
}

fn weighted_variance(field: &ScalarField) -> f64 {
    let g = weighted_anomaly(field.grid(), field.values());
    g.iter().map(|x| x * x).sum::<f64>() / g.len() as f64
}

#[test]
fn zonal_wave_lands_in_its_shell() {
    let grid = Arc::new(LatLonGrid::regular(64, 128, false).unwrap());
    let f = ScalarField::from_fn(grid, meta(), |_, lon| (4.0 * lon.to_radians()).cos()).unwrap();
    let spec = isotropic_spectrum(&f).unwrap();
    // sqrt(w) modulates the wave in latitude; leakage stays in nearby shells
    // but must be small relative to the target.
    let leak = spec.total() - spec.energy(4);
    assert!(leak < 0.01 * spec.total(), "leakage {}", leak / spec.total());
}

#[test]
fn constant_field_has_no_energy() {
    let grid = Arc::new(LatLonGrid::regular(32, 64, true).unwrap());
    let f = ScalarField::from_fn(grid, meta(), |_, _| 42.0).unwrap();
    let spec = isotropic_spectrum(&f).unwrap();
    assert!(spec.energies().iter().all(|e| *e < 1e-24), "{:?}", &spec.energies()[..4]);
}

#[test]
fn white_noise_matches_direct_binning() {
    let (nlat, nlon) = (16, 32);
    let grid = Arc::new(LatLonGrid::regular(nlat, nlon, false).unwrap());
    let f = random_field(&grid, 7);
    let spec = isotropic_spectrum(&f).unwrap();

    // Brute-force DFT with explicit trigonometric sums.
    let g = weighted_anomaly(&grid, f.values());
    let n = (nlat * nlon) as f64;
    let mut oracle = vec![0.0; spec.k_max()];
    for p in 0..nlat {
        for q in 0..nlon {
            let (mut re, mut im) = (0.0, 0.0);
            for i in 0..nlat {
                for j in 0..nlon {
                    let ang = -2.0 * std::f64::consts::PI * (p as f64 * i as f64 / nlat as f64 + q as f64 * j as f64 / nlon as f64);
                    re += g[i * nlon + j] * ang.cos();
                    im += g[i * nlon + j] * ang.sin();
                }
            }
            let ky = if p <= nlat / 2 { p as f64 } else { p as f64 - nlat as f64 };
            let kx = if q <= nlon / 2 { q as f64 } else { q as f64 - nlon as f64 };
            let k = (kx * kx + ky * ky).sqrt().round() as usize;
            if k > 0 {
                oracle[k - 1] += (re * re + im * im) / (n * n);
            }
        }
    }
    for (k, (a, b)) in spec.energies().iter().zip(&oracle).enumerate() {
        assert!((a - b).abs() < 1e-12 * b.max(1e-3), "shell {}: {a} vs {b}", k + 1);
    }
}

#[test]
fn white_noise_energy_tracks_mode_count() {
    let grid = oracle_grid();
    let shells = fft::ShellMap::for_grid(&grid);
    let mut acc = vec![0.0; shells.max_shell];
    let reps = 20;
    for seed in 0..reps {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = grid
            .row_weights()
            .iter()
            .flat_map(|w| std::iter::repeat_n(*w, grid.nlon()))
            .map(|w| rng.sample::<f64, _>(rand_distr::StandardNormal) / w.sqrt())
            .collect();
        let spec = isotropic_spectrum(&ScalarField::new(grid.clone(), values, meta()).unwrap()).unwrap();
        for (a, e) in acc.iter_mut().zip(spec.energies()) {
            *a += e / reps as f64;
        }
    }
    // Unit-variance white noise in weighted space spreads 1/N per mode.
    let n = grid.len() as f64;
    for k in 10..=40 {
        let expected = shells.counts[k] as f64 / n;
        assert!((acc[k - 1] / expected - 1.0).abs() < 0.15, "shell {k}");
    }
}

#[test]
fn parseval_on_random_fields() {
    for (seed, (nlat, nlon)) in [(1, (32, 64)), (2, (33, 60)), (3, (96, 192)), (4, (40, 40))] {
        let grid = Arc::new(LatLonGrid::regular(nlat, nlon, seed % 2 == 0).unwrap());
        let f = random_field(&grid, seed);
        let spec = isotropic_spectrum(&f).unwrap();
        let var = weighted_variance(&f);
        assert!((spec.total() / var - 1.0).abs() < 1e-8);
    }
}

#[test]
fn coarse_and_irregular_grids_rejected() {
    let coarse = Arc::new(LatLonGrid::regular(12, 64, false).unwrap());
    let f = ScalarField::from_fn(coarse, meta(), |_, _| 0.0).unwrap();
    assert!(matches!(isotropic_spectrum(&f), Err(Error::GridTooCoarse { limit: 6, .. })));
    let lats: Vec<f64> = (0..20).map(|i| -80.0 + (i * i) as f64 * 0.4).collect();
    let lons: Vec<f64> = (0..32).map(|j| j as f64 * 11.25).collect();
    let irregular = Arc::new(LatLonGrid::new(lats, lons).unwrap());
    let f = ScalarField::from_fn(irregular, meta(), |_, _| 0.0).unwrap();
    assert!(matches!(isotropic_spectrum(&f), Err(Error::InvalidGrid(_))));
}

fn spec(values: Vec<f64>) -> Spectrum {
    Spectrum::new(values).unwrap()
}

#[test]
fn spectral_ratio_cases() {
    let a = spec(vec![1.0, 2.0, 0.0, 4.0]);
    let r = spectral_ratio(&a, &a).unwrap();
    assert_eq!(r.get(1), Some(1.0));
    assert_eq!(r.flagged(), vec![3]);
    let half = a.scaled(0.5).unwrap();
    let r = spectral_ratio(&half, &a).unwrap();
    assert_eq!(r.get(4), Some(0.5));
    assert!(matches!(
        spectral_ratio(&a, &spec(vec![1.0])),
        Err(Error::ShellMismatch { left: 4, right: 1 })
    ));
}

#[test]
fn sfi_contracts() {
    let a = Spectrum::from_fn(300, |k| (k as f64).powf(-3.0)).unwrap();
    assert_eq!(sfi(&a, &a).unwrap(), 1.0);
    let tenth = a.scaled(0.1).unwrap();
    assert!((sfi(&tenth, &a).unwrap() - 0.5).abs() < 1e-12);
    let hundredth = a.scaled(1e-3).unwrap();
    assert_eq!(sfi(&hundredth, &a).unwrap(), 0.0);
    assert!(matches!(sfi(&spec(vec![0.0; 3]), &spec(vec![1.0; 3])), Err(Error::InsufficientSpectrum)));
}

#[test]
fn effective_resolution_cases() {
    let a = Spectrum::from_fn(320, |k| 1.0 / k as f64).unwrap();
    assert_eq!(effective_resolution(&a, &a).unwrap().normalized, 1.0);

    let dip = Spectrum::from_fn(320, |k| if k <= 55 { 0.9 } else { 0.2 } / k as f64).unwrap();
    let r = effective_resolution(&dip, &a).unwrap();
    assert_eq!(r.shell, 55);
    assert!((r.normalized - 55.0 / 300.0).abs() < 1e-15);

    // Energy inflated at every shell: saturates despite a poor SFI.
    let inflated = a.scaled(50.0).unwrap();
    assert_eq!(effective_resolution(&inflated, &a).unwrap().normalized, 1.0);
    assert!(sfi(&inflated, &a).unwrap() < 0.2);

    let none = a.scaled(0.1).unwrap();
    assert_eq!(effective_resolution(&none, &a).unwrap().shell, 0);
}

#[test]
fn shells_past_isotropic_limit_are_not_scored() {
    let f = Spectrum::with_limit(vec![1.0, 1.0, 1.0, 1e20], 3).unwrap();
    let a = Spectrum::with_limit(vec![1.0, 1.0, 1.0, 1e-30], 3).unwrap();
    assert_eq!(sfi(&f, &a).unwrap(), 1.0);
    assert_eq!(effective_resolution(&f, &a).unwrap().shell, 3);
    // Reports still carry every shell.
    assert_eq!(spectral_ratio(&f, &a).unwrap().ratio.len(), 4);
}

#[test]
fn power_law_fits() {
    let cubic = Spectrum::from_fn(100, |k| (k as f64).powi(-3)).unwrap();
    let fit = fit_power_law(&cubic, 4, 60).unwrap();
    assert!((fit.slope + 3.0).abs() < 1e-6);
    assert!((fit.r2 - 1.0).abs() < 1e-12);
    let meso = Spectrum::from_fn(200, |k| 7.0 * (k as f64).powf(-5.0 / 3.0)).unwrap();
    let fit = fit_power_law(&meso, 20, 200).unwrap();
    assert!((fit.slope + 5.0 / 3.0).abs() < 0.1);
    assert!((fit.intercept - 7f64.ln()).abs() < 1e-9);
    let holey = spec(vec![1.0, 0.5, 0.0, 0.2]);
    assert!(matches!(fit_power_law(&holey, 1, 4), Err(Error::NonpositiveEnergy(3))));
    assert!(matches!(fit_power_law(&holey, 3, 3), Err(Error::InvalidRange { .. })));
}

#[test]
fn identical_members_have_zero_variance() {
    let grid = Arc::new(LatLonGrid::regular(32, 64, false).unwrap());
    let f = random_field(&grid, 1);
    let var = conditional_variance_spectrum(&[f.clone(), f.clone(), f]).unwrap();
    assert!(var.variance.iter().all(|v| *v < 1e-28));
    let g = random_field(&grid, 2);
    assert!(matches!(conditional_variance_spectrum(&[g]), Err(Error::InsufficientEnsemble(1))));
}

#[test]
fn planted_variance_is_recovered() {
    let grid = oracle_grid();
    let mean = SpectralRecipe::power_law(60, -3.0, 10.0, 3).unwrap();
    let var = SpectralRecipe::power_law(60, -2.0, 1.0, 4).unwrap();
    let ens = ensemble_with_conditional_variance(&mean, &var, 200, grid, meta()).unwrap();
    let est = conditional_variance_spectrum(&ens.members).unwrap();
    // Low shells hold too few modes for a 5% check at 200 members.
    for k in 8..=40 {
        let planted = var.energy[k - 1];
        assert!((est.get(k) / planted - 1.0).abs() < 0.05, "shell {k}: {}", est.get(k) / planted);
    }
}

#[test]
fn predicted_sfi_cases() {
    let truth = Spectrum::from_fn(250, |k| (k as f64).powi(-3)).unwrap();
    let zero = ConditionalVarianceSpectrum::new(vec![0.0; 250], 120).unwrap();
    assert_eq!(predicted_sfi(LossFamily::Mse, &zero, &truth, None).unwrap(), 1.0);
    assert_eq!(predicted_sfi(LossFamily::Crps, &zero, &truth, None).unwrap(), 1.0);

    let ninety = ConditionalVarianceSpectrum::new(truth.energies().iter().map(|e| 0.9 * e).collect(), 120).unwrap();
    assert!((predicted_sfi(LossFamily::Mse, &ninety, &truth, None).unwrap() - 0.5).abs() < 1e-9);

    let too_big = ConditionalVarianceSpectrum::new(truth.energies().iter().map(|e| 1.5 * e).collect(), 120).unwrap();
    assert!(matches!(
        predicted_sfi(LossFamily::Mse, &too_big, &truth, None),
        Err(Error::InconsistentVariance { k: 1, .. })
    ));

    assert!(matches!(
        predicted_sfi(LossFamily::Score, &zero, &truth, None),
        Err(Error::MissingSampleNoise)
    ));
    let noise = truth.scaled(9.0).unwrap();
    assert!((predicted_sfi(LossFamily::Score, &zero, &truth, Some(&noise)).unwrap() - 0.5).abs() < 1e-12);
}

proptest! {
    #[test]
    fn sfi_is_bounded_and_symmetric(
        a in prop::collection::vec(1e-6f64..1e3, 12),
        b in prop::collection::vec(1e-6f64..1e3, 12),
    ) {
        let (sa, sb) = (spec(a), spec(b));
        let ab = sfi(&sa, &sb).unwrap();
        let ba = sfi(&sb, &sa).unwrap();
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert!((ab - ba).abs() < 1e-12);
    }

    #[test]
    fn effective_resolution_is_monotone(
        a in prop::collection::vec(0.1f64..10.0, 30),
        f in prop::collection::vec(0.0f64..10.0, 30),
        bump in prop::collection::vec(0.0f64..5.0, 30),
    ) {
        let sa = spec(a);
        let lower = spec(f.clone());
        let higher = spec(f.iter().zip(&bump).map(|(x, d)| x + d).collect());
        let lo = effective_resolution(&lower, &sa).unwrap().shell;
        let hi = effective_resolution(&higher, &sa).unwrap().shell;
        prop_assert!(hi >= lo);
    }
}
