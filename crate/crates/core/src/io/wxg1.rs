//! WXG1 binary grid files.
//!
//! Layout (little-endian): magic `WXG1`, `u32 nlat`, `u32 nlon`,
//! `f64 lats[nlat]`, `f64 lons[nlon]`, `f64 values[nlat * nlon]` row-major
//! with latitude as the slow axis. Latitude order is whatever the producer
//! wrote; in memory it is normalized to ascending and restored on write.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{LatLonGrid, ScalarField};

pub const MAGIC: &[u8; 4] = b"WXG1";
const HEADER_LEN: usize = 12;

/// Decoded grid and values, latitude ascending.
#[derive(Debug, Clone)]
pub struct GridData {
    pub grid: LatLonGrid,
    pub values: Vec<f64>,
}

fn read_f64s(bytes: &[u8]) -> impl Iterator<Item = f64> + '_ {
    bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
}

pub fn decode(bytes: &[u8]) -> Result<GridData> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!("{} bytes is shorter than the header", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let nlat = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let nlon = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let expected = nlat
        .checked_mul(nlon)
        .and_then(|n| n.checked_add(nlat))
        .and_then(|n| n.checked_add(nlon))
        .and_then(|n| n.checked_mul(8))
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or_else(|| Error::Format("dimensions overflow".into()))?;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "{nlat}x{nlon} grid needs {expected} bytes, got {}",
            bytes.len()
        )));
    }

    let body = &bytes[HEADER_LEN..];
    let (lat_bytes, rest) = body.split_at(nlat * 8);
    let (lon_bytes, value_bytes) = rest.split_at(nlon * 8);
    let lats: Vec<f64> = read_f64s(lat_bytes).collect();
    let lons: Vec<f64> = read_f64s(lon_bytes).collect();
    let grid = LatLonGrid::new(lats, lons)?;

    let mut values: Vec<f64> = read_f64s(value_bytes).collect();
    if grid.source_descending() {
        reverse_rows(&mut values, nlon);
    }
    Ok(GridData { grid, values })
}

pub fn encode(grid: &LatLonGrid, values: &[f64]) -> Result<Vec<u8>> {
    if values.len() != grid.len() {
        return Err(Error::InvalidField(format!(
            "{} values for a {}x{} grid",
            values.len(),
            grid.nlat(),
            grid.nlon()
        )));
    }
    let nlat = u32::try_from(grid.nlat()).map_err(|_| Error::Format("nlat exceeds u32".into()))?;
    let nlon = u32::try_from(grid.nlon()).map_err(|_| Error::Format("nlon exceeds u32".into()))?;

    let mut out = Vec::with_capacity(HEADER_LEN + 8 * (grid.nlat() + grid.nlon() + values.len()));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&nlat.to_le_bytes());
    out.extend_from_slice(&nlon.to_le_bytes());

    let mut lats = grid.lats().to_vec();
    let mut rows = values.to_vec();
    if grid.source_descending() {
        lats.reverse();
        reverse_rows(&mut rows, grid.nlon());
    }
    for x in lats.iter().chain(grid.lons()).chain(&rows) {
        out.extend_from_slice(&x.to_le_bytes());
    }
    Ok(out)
}

fn reverse_rows(values: &mut [f64], nlon: usize) {
    let nlat = values.len() / nlon;
    for i in 0..nlat / 2 {
        let j = nlat - 1 - i;
        let (head, tail) = values.split_at_mut(j * nlon);
        head[i * nlon..(i + 1) * nlon].swap_with_slice(&mut tail[..nlon]);
    }
}

pub fn read_file(path: &Path) -> Result<GridData> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn write_file(path: &Path, grid: &LatLonGrid, values: &[f64]) -> Result<()> {
    let bytes = encode(grid, values)?;
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn write_field(path: &Path, field: &ScalarField) -> Result<()> {
    write_file(path, field.grid(), field.values())
}
