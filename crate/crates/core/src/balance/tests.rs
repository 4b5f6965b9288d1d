use std::sync::Arc;

use chrono::{TimeZone, Utc};

use super::*;
use crate::grid::{FieldMeta, Variable};
use crate::synth::{balanced_state, BalancedPattern};

fn meta(variable: Variable) -> FieldMeta {
    FieldMeta::new(variable, "m", Utc.with_ymd_and_hms(2023, 1, 5, 0, 0, 0).unwrap(), 24)
}

fn grid() -> Arc<LatLonGrid> {
    Arc::new(LatLonGrid::regular(73, 144, true).unwrap())
}

fn field(grid: &Arc<LatLonGrid>, variable: Variable, values: Vec<f64>) -> ScalarField {
    ScalarField::new(grid.clone(), values, meta(variable)).unwrap()
}

/// Winds from a streamfunction (u = -dpsi/dy, v = dpsi/dx) or a velocity
/// potential (u = dchi/dx, v = dchi/dy), evaluated analytically.
fn analytic_flow(grid: &Arc<LatLonGrid>, rotational: bool) -> (ScalarField, ScalarField) {
    let a = grid.radius_m();
    let scale = 1e7;
    let mut u = Vec::new();
    let mut v = Vec::new();
    for &lat in grid.lats() {
        for &lon in grid.lons() {
            let (p, l) = (lat.to_radians(), lon.to_radians());
            // q = scale * cos^2(p) sin(p) cos(3 l)
            let dq_dl = -3.0 * scale * p.cos().powi(2) * p.sin() * (3.0 * l).sin();
            let dq_dp = scale * (3.0 * l).cos() * (p.cos().powi(3) - 2.0 * p.cos() * p.sin().powi(2));
            let (gx, gy) = if p.cos() > 1e-12 {
                (dq_dl / (a * p.cos()), dq_dp / a)
            } else {
                (0.0, 0.0)
            };
            if rotational {
                u.push(-gy);
                v.push(gx);
            } else {
                u.push(gx);
                v.push(gy);
            }
        }
    }
    (field(grid, Variable::U500, u), field(grid, Variable::V500, v))
}

#[test]
fn rotational_flow_is_nondivergent() {
    let g = grid();
    let (u, v) = analytic_flow(&g, true);
    let s = nondivergence_score(&u, &v, &BalanceConfig::default()).unwrap();
    assert!(s.ratio < 1e-3, "NDR {}", s.ratio);
    assert!(s.score > 0.999);
}

#[test]
fn potential_flow_is_fully_divergent() {
    let g = grid();
    let (u, v) = analytic_flow(&g, false);
    let s = nondivergence_score(&u, &v, &BalanceConfig::default()).unwrap();
    assert!(s.ratio > 100.0, "NDR {}", s.ratio);
    assert_eq!(s.score, 0.0);
}

#[test]
fn solid_body_rotation_scores_one() {
    let g = grid();
    let u: Vec<f64> = g
        .lats()
        .iter()
        .flat_map(|p| std::iter::repeat_n(15.0 * p.to_radians().cos(), g.nlon()))
        .collect();
    let s = nondivergence_score(
        &field(&g, Variable::U500, u),
        &field(&g, Variable::V500, vec![0.0; g.len()]),
        &BalanceConfig::default(),
    )
    .unwrap();
    assert!(s.ratio < 1e-20);
}

#[test]
fn doubled_winds_match_stencil_oracle() {
    let g = grid();
    let cfg = BalanceConfig::default();
    let s = balanced_state(g.clone(), &cfg.constants, &BalancedPattern::default(), &meta(Variable::Z500)).unwrap();
    let u2 = s.u500.with_values(s.u500.values().iter().map(|x| 2.0 * x).collect()).unwrap();
    let v2 = s.v500.with_values(s.v500.values().iter().map(|x| 2.0 * x).collect()).unwrap();
    let got = geostrophic_score(&u2, &v2, &s.z500, &cfg).unwrap();
    // |2vg - vg|^2 / |2vg|^2 = 1/4 at every point.
    assert!((got.ratio - 0.5).abs() < 1e-12);
    assert!((got.score - 0.5).abs() < 1e-12);
}

#[test]
fn calm_winds_over_a_height_gradient_score_zero() {
    let g = grid();
    let cfg = BalanceConfig::default();
    let s = balanced_state(g.clone(), &cfg.constants, &BalancedPattern::default(), &meta(Variable::Z500)).unwrap();
    let zero = field(&g, Variable::U500, vec![0.0; g.len()]);
    let got = geostrophic_score(&zero, &zero, &s.z500, &cfg).unwrap();
    assert!(got.ratio.is_infinite());
    assert_eq!(got.score, 0.0);
}

#[test]
fn uniform_temperature_gives_unit_thermal_ratio() {
    let g = grid();
    let cfg = BalanceConfig::default();
    let s = balanced_state(g.clone(), &cfg.constants, &BalancedPattern::default(), &meta(Variable::Z500)).unwrap();
    let flat_t = field(&g, Variable::T850, vec![260.0; g.len()]);
    let got = thermal_wind_score(&s.u500, &s.v500, &s.u850, &s.v850, &flat_t, &cfg).unwrap();
    assert!((got.ratio - 1.0).abs() < 1e-12);
    assert!((got.score - 0.5).abs() < 1e-12);
}

#[test]
fn orthogonal_shear_is_penalized() {
    let g = grid();
    let cfg = BalanceConfig::default();
    let s = balanced_state(g.clone(), &cfg.constants, &BalancedPattern::default(), &meta(Variable::Z500)).unwrap();
    // Rotate the balanced shear by 90 degrees: (du, dv) -> (-dv, du).
    let du: Vec<f64> = s.u500.values().iter().zip(s.u850.values()).map(|(a, b)| a - b).collect();
    let dv: Vec<f64> = s.v500.values().iter().zip(s.v850.values()).map(|(a, b)| a - b).collect();
    let u500 = s.u850.with_values(s.u850.values().iter().zip(&dv).map(|(b, d)| b - d).collect()).unwrap();
    let v500 = s.v850.with_values(s.v850.values().iter().zip(&du).map(|(b, d)| b + d).collect()).unwrap();
    let got = thermal_wind_score(&u500, &v500, &s.u850, &s.v850, &s.t_layer, &cfg).unwrap();
    // |R(d) - d| = sqrt(2) |d| for a 90 degree rotation.
    assert!((got.ratio - 2f64.sqrt()).abs() < 1e-9, "ratio {}", got.ratio);
    assert!(got.score < 0.3);
}

#[test]
fn biased_temperature_matches_thickness_closed_form() {
    let g = grid();
    let cfg = BalanceConfig::default();
    let s = balanced_state(g.clone(), &cfg.constants, &BalancedPattern::default(), &meta(Variable::Z500)).unwrap();
    let warm = s.t_layer.with_values(s.t_layer.values().iter().map(|t| t + 10.0).collect()).unwrap();
    let got = hydrostatic_score(&s.z500, &s.z850, &warm, &cfg).unwrap();
    let c = cfg.constants;
    let thickness: Vec<f64> = s
        .z500
        .values()
        .iter()
        .zip(s.z850.values())
        .map(|(a, b)| c.gravity * (a - b))
        .collect();
    let mask: Vec<bool> = g
        .lats()
        .iter()
        .flat_map(|p| std::iter::repeat_n(p.abs() < 90.0, g.nlon()))
        .collect();
    let expected = c.r_dry * 10.0 * LAYER_PRESSURE_RATIO.ln() / weighted_mean(&g, &thickness, Some(&mask));
    assert!((got.ratio - expected).abs() < 1e-12 * expected.max(1.0));
}

#[test]
fn composite_is_the_mean() {
    let sub = |score| Some(SubScore { ratio: 0.0, score });
    let r = pcs_composite(sub(0.9), sub(0.1), sub(0.6), sub(0.9)).unwrap();
    assert!((r.composite - 0.625).abs() < 1e-15);
    assert!(r.dry_virtual_temperature);
    let r = pcs_composite(sub(1.0), sub(0.0), sub(1.0), sub(0.0)).unwrap();
    assert_eq!(r.composite, 0.5);
    assert!(matches!(
        pcs_composite(sub(1.0), None, sub(1.0), sub(1.0)),
        Err(Error::IncompleteBalance("nondivergence"))
    ));
}

#[test]
fn midlat_mask_bounds() {
    let g = LatLonGrid::regular(181, 8, true).unwrap();
    let mask = BalanceConfig::default().midlat_mask(&g);
    let kept: Vec<f64> = g
        .lats()
        .iter()
        .enumerate()
        .filter(|(i, _)| mask[i * g.nlon()])
        .map(|(_, p)| *p)
        .collect();
    assert!(kept.iter().all(|p| (20.0..=70.0).contains(&p.abs())));
    assert_eq!(kept.len(), 2 * 51);
}

#[test]
fn layer_temperature_averages_levels() {
    let g = grid();
    let t850 = field(&g, Variable::T850, vec![280.0; g.len()]);
    let t500 = field(&g, Variable::T500, vec![250.0; g.len()]);
    let mid = layer_temperature(&t850, Some(&t500)).unwrap();
    assert!(mid.values().iter().all(|t| *t == 265.0));
    assert_eq!(layer_temperature(&t850, None).unwrap().values(), t850.values());
}
