use super::*;
use crate::balance::{geostrophic_score, hydrostatic_score, thermal_wind_score};
use crate::spectral::{fit_power_law, isotropic_spectrum};
use chrono::{TimeZone, Utc};

fn meta(variable: Variable) -> FieldMeta {
    FieldMeta::new(variable, "synth", Utc.with_ymd_and_hms(2023, 7, 10, 0, 0, 0).unwrap(), 0)
}

#[test]
fn generators_are_deterministic() {
    let grid = Arc::new(LatLonGrid::regular(32, 64, false).unwrap());
    let recipe = SpectralRecipe::power_law(20, -3.0, 1.0, 42).unwrap();
    let a = field_with_spectrum(&recipe, grid.clone(), meta(Variable::Z500)).unwrap();
    let b = field_with_spectrum(&recipe, grid.clone(), meta(Variable::Z500)).unwrap();
    assert_eq!(a.values(), b.values());
    let c = field_with_spectrum(&SpectralRecipe { seed: 43, ..recipe }, grid, meta(Variable::Z500)).unwrap();
    assert_ne!(a.values(), c.values());
}

#[test]
fn zero_recipe_gives_zero_field() {
    let grid = Arc::new(LatLonGrid::regular(32, 64, false).unwrap());
    let recipe = SpectralRecipe::new(vec![0.0; 20], 1).unwrap();
    let f = field_with_spectrum(&recipe, grid, meta(Variable::Z500)).unwrap();
    assert!(f.values().iter().all(|v| *v == 0.0));
}

#[test]
fn single_shell_recipe_concentrates_energy() {
    let grid = oracle_grid();
    for shell in [3, 12, 40] {
        let recipe = SpectralRecipe::from_fn(60, 5, |k| if k == shell { 2.0 } else { 0.0 }).unwrap();
        let spec = isotropic_spectrum(&field_with_spectrum(&recipe, grid.clone(), meta(Variable::Z500)).unwrap()).unwrap();
        assert!(spec.energy(shell) / spec.total() >= 0.99, "shell {shell}");
    }
}

#[test]
fn k_minus_three_round_trip() {
    let grid = oracle_grid();
    for seed in 0..5 {
        let recipe = SpectralRecipe::power_law(60, -3.0, 1.0, seed).unwrap();
        let spec = isotropic_spectrum(&field_with_spectrum(&recipe, grid.clone(), meta(Variable::Z500)).unwrap()).unwrap();
        let fit = fit_power_law(&spec, 4, 60).unwrap();
        assert!((fit.slope + 3.0).abs() < 0.1, "seed {seed}: slope {}", fit.slope);
    }
}

#[test]
fn rejects_recipes_beyond_the_grid() {
    let grid = Arc::new(LatLonGrid::regular(16, 32, false).unwrap());
    let recipe = SpectralRecipe::power_law(500, -3.0, 1.0, 0).unwrap();
    assert!(matches!(
        field_with_spectrum(&recipe, grid, meta(Variable::Z500)),
        Err(Error::GridTooCoarse { .. })
    ));
    assert!(SpectralRecipe::new(vec![1.0, -1.0], 0).is_err());
}

#[test]
fn zero_variance_ensemble_has_no_deficit() {
    let grid = Arc::new(LatLonGrid::regular(32, 64, false).unwrap());
    let mean = SpectralRecipe::power_law(30, -3.0, 1.0, 1).unwrap();
    let var = SpectralRecipe::new(vec![0.0; 30], 2).unwrap();
    let ens = ensemble_with_conditional_variance(&mean, &var, 4, grid, meta(Variable::Z500)).unwrap();
    for m in &ens.members {
        assert_eq!(m.values(), ens.mean.values());
    }
    assert!(matches!(
        ensemble_with_conditional_variance(&mean, &var, 1, oracle_grid(), meta(Variable::Z500)),
        Err(Error::InsufficientEnsemble(1))
    ));
}

#[test]
fn shifted_waves_follow_the_double_penalty() {
    let grid = Arc::new(LatLonGrid::regular(8, 720, false).unwrap());
    let (t, f) = shifted_wave_pair(1.0, 10, 0.1, grid.clone(), meta(Variable::Z500)).unwrap();
    let mse = zonal_mse(&t, &f).unwrap();
    assert!((mse - (1.0 - 1f64.cos())).abs() < 1e-3);
    let (t, f) = shifted_wave_pair(2.0, 7, 0.0, grid.clone(), meta(Variable::Z500)).unwrap();
    assert_eq!(zonal_mse(&t, &f).unwrap(), 0.0);
    assert!(shifted_wave_pair(1.0, 360, 0.1, grid, meta(Variable::Z500)).is_err());
}

#[test]
fn balanced_state_is_balanced() {
    let grid = Arc::new(LatLonGrid::regular(73, 144, true).unwrap());
    let cfg = BalanceConfig::default();
    let s = balanced_state(grid, &cfg.constants, &BalancedPattern::default(), &meta(Variable::Z500)).unwrap();
    let geo = geostrophic_score(&s.u500, &s.v500, &s.z500, &cfg).unwrap();
    assert!(geo.ratio < 1e-10, "AGR {}", geo.ratio);
    let geo850 = geostrophic_score(&s.u850, &s.v850, &s.z850, &cfg).unwrap();
    assert!(geo850.ratio < 1e-10);
    let hydro = hydrostatic_score(&s.z500, &s.z850, &s.t_layer, &cfg).unwrap();
    assert!(hydro.ratio < 1e-10, "hydrostatic {}", hydro.ratio);
    let tw = thermal_wind_score(&s.u500, &s.v500, &s.u850, &s.v850, &s.t_layer, &cfg).unwrap();
    assert!(tw.score > 0.999, "thermal ratio {}", tw.ratio);
}

#[test]
fn noise_injection_plants_the_ageostrophic_ratio() {
    let grid = Arc::new(LatLonGrid::regular(73, 144, true).unwrap());
    let cfg = BalanceConfig::default();
    let s = balanced_state(grid, &cfg.constants, &BalancedPattern::default(), &meta(Variable::Z500)).unwrap();
    for rho in [0.1, 0.3, 0.5] {
        let (u, v) = perturb_winds(&s.u500, &s.v500, rho, &cfg, 9).unwrap();
        let agr = geostrophic_score(&u, &v, &s.z500, &cfg).unwrap().ratio;
        assert!((agr / rho - 1.0).abs() < 0.05, "rho {rho}: AGR {agr}");
    }
    assert!(perturb_winds(&s.u500, &s.v500, 1.0, &cfg, 0).is_err());
}

#[test]
fn ke_drift_series() {
    let flat = drifting_ke_series(0.0, &[0, 24, 48]);
    assert!(flat.values().all(|r| *r == 1.0));
    let s = drifting_ke_series(-0.01, &[0, 360]);
    assert!((s[&360] - (-0.15f64).exp()).abs() < 1e-15);
}

#[test]
fn planted_tail_is_deterministic_and_unbiased_below_threshold() {
    let grid = Arc::new(LatLonGrid::regular(32, 64, false).unwrap());
    let clim = Climatology::uniform(grid.clone(), Variable::T2m, vec![280.0; grid.len()], vec![1.0; grid.len()]).unwrap();
    let (f1, v1) = planted_tail_bias(&clim, 0.3, meta(Variable::T2m), 3).unwrap();
    let (f2, v2) = planted_tail_bias(&clim, 0.3, meta(Variable::T2m), 3).unwrap();
    assert_eq!(f1.values(), f2.values());
    assert_eq!(v1.values(), v2.values());
    // Below two sigma the forecast only differs by the small noise.
    for (f, v) in f1.values().iter().zip(v1.values()) {
        if *v - 280.0 < 2.0 {
            assert!((f - v).abs() < 10.0 * TAIL_NOISE_SIGMAS);
        }
    }
    assert!(planted_tail_bias(&clim, -0.1, meta(Variable::T2m), 3).is_err());
}
