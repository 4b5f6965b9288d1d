//! JSON manifests mapping (model, variable, init, lead) to WXG1 files, and
//! the climatology index.

use std::env;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ForecastKey, ForecastSet, Variable};

pub const DATA_DIR_ENV: &str = "WXDIAG_DATA_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub model: String,
    pub variable: Variable,
    pub init_time: DateTime<Utc>,
    pub lead_hours: u32,
    pub path: PathBuf,
}

impl ManifestEntry {
    pub fn key(&self) -> ForecastKey {
        ForecastKey {
            model: self.model.clone(),
            variable: self.variable,
            init_time: self.init_time,
            lead_hours: self.lead_hours,
        }
    }
}

pub fn parse_manifest(text: &str) -> Result<Vec<ManifestEntry>> {
    let entries: Vec<ManifestEntry> = serde_json::from_str(text)?;
    for e in &entries {
        if e.model.trim().is_empty() {
            return Err(Error::Config("manifest entry with empty model".into()));
        }
        if e.init_time.checked_add_signed(chrono::Duration::hours(i64::from(e.lead_hours))).is_none() {
            return Err(Error::Config(format!("{}: valid time out of range", e.model)));
        }
    }
    Ok(entries)
}

/// One climatology slot. A missing `doy` or `hour` makes the entry apply to
/// every day or hour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClimatologyEntry {
    pub variable: Variable,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doy: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hour: Option<u32>,
    pub mu: PathBuf,
    pub sigma: PathBuf,
}

pub fn parse_climatology_index(text: &str) -> Result<Vec<ClimatologyEntry>> {
    let entries: Vec<ClimatologyEntry> = serde_json::from_str(text)?;
    for e in &entries {
        if let Some(d) = e.doy {
            if !(1..=366).contains(&d) {
                return Err(Error::Config(format!("climatology doy {d} outside 1..=366")));
            }
        }
        if let Some(h) = e.hour {
            if h > 23 {
                return Err(Error::Config(format!("climatology hour {h} outside 0..=23")));
            }
        }
    }
    Ok(entries)
}

/// Resolves a manifest-relative path. Absolute paths pass through; relative
/// ones are joined to `WXDIAG_DATA_DIR` when set, else to the manifest's
/// own directory.
pub fn resolve(manifest_path: &Path, entry_path: &Path) -> PathBuf {
    if entry_path.is_absolute() {
        return entry_path.to_path_buf();
    }
    match env::var_os(DATA_DIR_ENV) {
        Some(root) if !root.is_empty() => Path::new(&root).join(entry_path),
        _ => manifest_path
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join(entry_path),
    }
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut entries = parse_manifest(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    for e in &mut entries {
        e.path = resolve(path, &e.path);
    }
    Ok(entries)
}

pub fn read_climatology_index(path: &Path) -> Result<Vec<ClimatologyEntry>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut entries =
        parse_climatology_index(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    for e in &mut entries {
        e.mu = resolve(path, &e.mu);
        e.sigma = resolve(path, &e.sigma);
    }
    Ok(entries)
}

/// Builds a forecast index. Verification entries are keyed by valid time
/// (`init_time + lead_hours`); their model tag is ignored.
pub fn build_forecast_set(forecasts: &[ManifestEntry], verification: &[ManifestEntry]) -> ForecastSet {
    let mut set = ForecastSet::new();
    for e in forecasts {
        set.insert_forecast(e.key(), e.path.clone());
    }
    for e in verification {
        set.insert_verification(e.variable, e.key().valid_time(), e.path.clone());
    }
    set
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_entries() {
        let text = r#"[
            {"model": "fcn3", "variable": "z500", "init_time": "2023-07-10T00:00:00Z",
             "lead_hours": 120, "path": "fcn3/z500_120.wxg1"}
        ]"#;
        let entries = parse_manifest(text).unwrap();
        assert_eq!(entries[0].variable, Variable::Z500);
        assert_eq!(entries[0].lead_hours, 120);
        assert_eq!(entries[0].key().valid_time().to_rfc3339(), "2023-07-15T00:00:00+00:00");
    }

    #[test]
    fn rejects_unknown_fields_and_variables() {
        assert!(parse_manifest(r#"[{"model":"a","variable":"z1000","init_time":"2023-01-01T00:00:00Z","lead_hours":0,"path":"x"}]"#).is_err());
        assert!(parse_manifest(r#"[{"model":"a","variable":"z500","init_time":"2023-01-01T00:00:00Z","lead_hours":0,"path":"x","extra":1}]"#).is_err());
        assert!(parse_manifest(r#"[{"model":"a","variable":"z500","init_time":"yesterday","lead_hours":0,"path":"x"}]"#).is_err());
        assert!(parse_climatology_index(r#"[{"variable":"t2m","doy":400,"mu":"a","sigma":"b"}]"#).is_err());
    }

    #[test]
    fn rejects_valid_times_past_the_calendar() {
        let text = r#"[{"model":"a","variable":"z500","init_time":"+262000-01-01T00:00:00Z","lead_hours":4000000000,"path":"x"}]"#;
        assert!(matches!(parse_manifest(text), Err(Error::Config(_))));
    }

    #[test]
    fn relative_paths_resolve_against_manifest_dir() {
        // Only meaningful when the env override is absent.
        if env::var_os(DATA_DIR_ENV).is_none() {
            let p = resolve(Path::new("/data/run/manifest.json"), Path::new("a/b.wxg1"));
            assert_eq!(p, PathBuf::from("/data/run/a/b.wxg1"));
        }
        assert_eq!(resolve(Path::new("m.json"), Path::new("/abs.wxg1")), PathBuf::from("/abs.wxg1"));
    }
}
