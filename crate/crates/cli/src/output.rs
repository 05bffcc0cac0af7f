use std::path::Path;

use crate::error::{CliError, CliResult};

pub fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    std::fs::write(path, contents).map_err(|source| CliError::Write {
        path: path.display().to_string(),
        source,
    })
}

/// Writes a header and rows of string cells as CSV.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
    let wrap = |e: csv::Error| CliError::Write {
        path: path.display().to_string(),
        source: e.into(),
    };
    let mut writer = csv::Writer::from_path(path).map_err(wrap)?;
    writer.write_record(header).map_err(wrap)?;
    for row in rows {
        writer.write_record(row).map_err(wrap)?;
    }
    writer.flush().map_err(|source| CliError::Write {
        path: path.display().to_string(),
        source,
    })
}

/// Shortest round-trip representation.
pub fn num(v: f64) -> String {
    v.to_string()
}
