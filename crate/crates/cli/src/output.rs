use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;

use crate::config::RunConfig;

/// 12 significant digits, scientific notation.
pub fn sci(x: f64) -> String {
    format!("{x:.11e}")
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Rows of a CSV file as header-keyed maps.
pub fn read_csv(path: &Path) -> Result<Vec<BTreeMap<String, String>>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("cannot read {}", path.display()))?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        out.push(header.iter().cloned().zip(rec.iter().map(str::to_string)).collect());
    }
    Ok(out)
}

pub fn field<'a>(row: &'a BTreeMap<String, String>, key: &str, path: &Path) -> Result<&'a str> {
    match row.get(key) {
        Some(v) => Ok(v),
        None => bail!("{}: missing column '{key}'", path.display()),
    }
}

pub fn parse_f64(row: &BTreeMap<String, String>, key: &str, path: &Path) -> Result<Option<f64>> {
    let v = field(row, key, path)?;
    if v.is_empty() {
        return Ok(None);
    }
    v.parse()
        .map(Some)
        .with_context(|| format!("{}: bad number '{v}' in column '{key}'", path.display()))
}

/// The balanced-unit conversion applied to the model, recorded verbatim.
#[derive(Debug, Clone, Serialize)]
pub struct UnitConversion {
    pub mass: f64,
    pub omega0: f64,
    /// Balanced `r` is the physical `r` times this.
    pub length_scale: f64,
    pub physical_coefficients: Vec<f64>,
    pub balanced_coefficients: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub passed: bool,
    pub seed: u64,
    pub config: RunConfig,
    pub units: UnitConversion,
    pub outputs: Vec<PathBuf>,
    pub summary: serde_json::Value,
}

impl Manifest {
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(format!("{}.manifest.json", self.command));
        std::fs::write(&path, serde_json::to_string_pretty(self)?)
            .with_context(|| format!("cannot write {}", path.display()))?;
        Ok(path)
    }
}
