//! CSV output of experiment results.
//!
//! `export_results(result, "run.csv", ..)` writes three files:
//! - `run.csv`: one row per replicate (and iteration, for curves) with columns
//!   `experiment,grid_sigma_bar2,replicate,m,mspe_merge,mspe_ens,log_ratio,cmse_merge,cmse_ens,tau,tau1,tau2`
//! - `run_summary.csv`: aggregated rows
//! - `run_manifest.csv`: `key,value` pairs (seed, config hash, version, row counts)
//!
//! Floats are written in shortest round-trip form, so identical results give
//! identical bytes.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::result::{ExperimentResult, ResultRow, SummaryRow};
use crate::error::Result;

/// Column order of the results CSV.
pub const RESULT_COLUMNS: [&str; 12] = [
    "experiment",
    "grid_sigma_bar2",
    "replicate",
    "m",
    "mspe_merge",
    "mspe_ens",
    "log_ratio",
    "cmse_merge",
    "cmse_ens",
    "tau",
    "tau1",
    "tau2",
];

/// Paths written by [`export_results`].
#[derive(Debug, Clone, PartialEq)]
pub struct ExportPaths {
    pub results: PathBuf,
    pub summary: PathBuf,
    pub manifest: PathBuf,
}

impl ExportPaths {
    pub fn for_results(path: &Path) -> Self {
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let sibling = |suffix: &str| path.with_file_name(format!("{stem}_{suffix}.csv"));
        Self {
            results: path.to_path_buf(),
            summary: sibling("summary"),
            manifest: sibling("manifest"),
        }
    }
}

fn write_rows<T: serde::Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// Writes the results, summary and manifest files. `config_hash` identifies
/// the configuration that produced the result.
pub fn export_results(result: &ExperimentResult, path: &Path, config_hash: &str) -> Result<ExportPaths> {
    let paths = ExportPaths::for_results(path);
    if result.rows.is_empty() {
        let mut w = csv::Writer::from_path(&paths.results)?;
        w.write_record(RESULT_COLUMNS)?;
        w.flush()?;
    } else {
        write_rows(&paths.results, &result.rows)?;
    }
    write_rows(&paths.summary, &result.summary)?;

    let mut manifest = File::create(&paths.manifest)?;
    let entries = [
        ("experiment", result.kind.as_str().to_string()),
        ("seed", result.seed.to_string()),
        ("config_hash", config_hash.to_string()),
        ("msboost_version", env!("CARGO_PKG_VERSION").to_string()),
        ("rows", result.rows.len().to_string()),
        ("summary_rows", result.summary.len().to_string()),
        ("crossing_lower", opt(result.crossing.map(|c| c.0))),
        ("crossing_upper", opt(result.crossing.map(|c| c.1))),
        ("dropped_truncations", result.dropped_truncations.to_string()),
    ];
    writeln!(manifest, "key,value")?;
    for (k, v) in entries {
        writeln!(manifest, "{k},{v}")?;
    }
    Ok(paths)
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<Vec<_>, _>>()?)
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<Vec<_>, _>>()?)
}

/// Manifest as ordered key/value pairs.
pub fn read_manifest(path: &Path) -> Result<Vec<(String, String)>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        out.push((
            rec.get(0).unwrap_or("").to_string(),
            rec.get(1).unwrap_or("").to_string(),
        ));
    }
    Ok(out)
}
