//! Centered finite differences on the sphere. Points where a stencil is
//! undefined (edge rows, edge columns of non-periodic grids, poles) carry NaN.

use crate::grid::LatLonGrid;

/// `d/d(lambda)` in radians.
pub fn d_dlon(grid: &LatLonGrid, values: &[f64]) -> Vec<f64> {
    let (nlat, nlon) = (grid.nlat(), grid.nlon());
    let dl = grid.lon_step_deg().to_radians();
    let periodic = grid.is_periodic();
    let mut out = vec![f64::NAN; values.len()];
    for i in 0..nlat {
        let row = &values[i * nlon..(i + 1) * nlon];
        for j in 0..nlon {
            let (w, e) = if periodic {
                ((j + nlon - 1) % nlon, (j + 1) % nlon)
            } else if j == 0 || j == nlon - 1 {
                continue;
            } else {
                (j - 1, j + 1)
            };
            out[i * nlon + j] = (row[e] - row[w]) / (2.0 * dl);
        }
    }
    out
}

/// `d/d(phi)` in radians, centered over the neighbouring rows.
pub fn d_dlat(grid: &LatLonGrid, values: &[f64]) -> Vec<f64> {
    let (nlat, nlon) = (grid.nlat(), grid.nlon());
    let lats = grid.lats();
    let mut out = vec![f64::NAN; values.len()];
    for i in 1..nlat - 1 {
        let dphi = (lats[i + 1] - lats[i - 1]).to_radians();
        for j in 0..nlon {
            out[i * nlon + j] = (values[(i + 1) * nlon + j] - values[(i - 1) * nlon + j]) / dphi;
        }
    }
    out
}

fn cos_lat(grid: &LatLonGrid) -> Vec<f64> {
    grid.lats()
        .iter()
        .map(|p| if p.abs() == 90.0 { 0.0 } else { p.to_radians().cos() })
        .collect()
}

/// Horizontal gradient `(1/(a cos phi) d/dlambda, 1/a d/dphi)`.
pub fn gradient(grid: &LatLonGrid, values: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let a = grid.radius_m();
    let nlon = grid.nlon();
    let cos = cos_lat(grid);
    let mut gx = d_dlon(grid, values);
    let mut gy = d_dlat(grid, values);
    for (k, (x, y)) in gx.iter_mut().zip(gy.iter_mut()).enumerate() {
        let c = cos[k / nlon];
        *x = if c > 0.0 { *x / (a * c) } else { f64::NAN };
        *y /= a;
    }
    (gx, gy)
}

/// `(1/(a cos phi)) [du/dlambda + d(v cos phi)/dphi]`.
pub fn divergence(grid: &LatLonGrid, u: &[f64], v: &[f64]) -> Vec<f64> {
    metric_combination(grid, u, v, 1.0)
}

/// `(1/(a cos phi)) [dv/dlambda - d(u cos phi)/dphi]`.
pub fn vorticity(grid: &LatLonGrid, u: &[f64], v: &[f64]) -> Vec<f64> {
    metric_combination(grid, v, u, -1.0)
}

fn metric_combination(grid: &LatLonGrid, along: &[f64], across: &[f64], sign: f64) -> Vec<f64> {
    let a = grid.radius_m();
    let nlon = grid.nlon();
    let cos = cos_lat(grid);
    let weighted: Vec<f64> = across
        .iter()
        .enumerate()
        .map(|(k, x)| x * cos[k / nlon])
        .collect();
    let dl = d_dlon(grid, along);
    let dp = d_dlat(grid, &weighted);
    dl.iter()
        .zip(&dp)
        .enumerate()
        .map(|(k, (x, y))| {
            let c = cos[k / nlon];
            if c > 0.0 {
                (x + sign * y) / (a * c)
            } else {
                f64::NAN
            }
        })
        .collect()
}
