//! 2D complex FFTs on row-major (lat, lon) buffers and isotropic shell maps.

use std::cell::RefCell;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::grid::LatLonGrid;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub(crate) enum Direction {
    Forward,
    Inverse,
}

/// Unnormalized in-place 2D transform of an `nlat x nlon` buffer.
pub(crate) fn fft2(data: &mut [Complex64], nlat: usize, nlon: usize, dir: Direction) {
    debug_assert_eq!(data.len(), nlat * nlon);
    PLANNER.with(|p| {
        let mut planner = p.borrow_mut();
        let (row, col) = match dir {
            Direction::Forward => (planner.plan_fft_forward(nlon), planner.plan_fft_forward(nlat)),
            Direction::Inverse => (planner.plan_fft_inverse(nlon), planner.plan_fft_inverse(nlat)),
        };
        row.process(data);

        let mut column = vec![Complex64::new(0.0, 0.0); nlat];
        for j in 0..nlon {
            for (i, c) in column.iter_mut().enumerate() {
                *c = data[i * nlon + j];
            }
            col.process(&mut column);
            for (i, c) in column.iter().enumerate() {
                data[i * nlon + j] = *c;
            }
        }
    });
}

/// Signed integer frequency of FFT bin `index` for a transform of length `n`.
pub(crate) fn signed_freq(index: usize, n: usize) -> i64 {
    if index <= n / 2 {
        index as i64
    } else {
        index as i64 - n as i64
    }
}

/// Isotropic shell of every mode: round(sqrt(kx^2 + ky^2)) with kx, ky in
/// cycles per domain.
#[derive(Debug, Clone)]
pub(crate) struct ShellMap {
    pub shell: Vec<usize>,
    /// Largest shell present (the grid corner).
    pub max_shell: usize,
    /// Largest shell whose ring is complete: floor(min(nlat, nlon) / 2).
    pub isotropic_limit: usize,
    /// Number of modes falling in each shell, index 0 included.
    pub counts: Vec<usize>,
}

impl ShellMap {
    pub fn new(nlat: usize, nlon: usize) -> Self {
        let mut shell = Vec::with_capacity(nlat * nlon);
        for i in 0..nlat {
            let ky = signed_freq(i, nlat) as f64;
            for j in 0..nlon {
                let kx = signed_freq(j, nlon) as f64;
                shell.push((kx * kx + ky * ky).sqrt().round() as usize);
            }
        }
        let max_shell = shell.iter().copied().max().unwrap_or(0);
        let mut counts = vec![0; max_shell + 1];
        for &s in &shell {
            counts[s] += 1;
        }
        Self {
            shell,
            max_shell,
            isotropic_limit: nlat.min(nlon) / 2,
            counts,
        }
    }

    pub fn for_grid(grid: &LatLonGrid) -> Self {
        Self::new(grid.nlat(), grid.nlon())
    }

    /// Sums `|c|^2` into shells 1..=max_shell (shell 0 dropped).
    pub fn bin_power(&self, coeffs: &[Complex64]) -> Vec<f64> {
        let mut energy = vec![0.0; self.max_shell];
        for (c, &s) in coeffs.iter().zip(&self.shell) {
            if s > 0 {
                energy[s - 1] += c.norm_sqr();
            }
        }
        energy
    }
}
