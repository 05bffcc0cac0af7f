//! CSV ingestion of studies.
//!
//! Two layouts are accepted: one file per study, or one long file with a
//! study identifier column. A header row is required. Missing values are an
//! error.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::dataset::Study;
use crate::error::{Error, Result};

const MISSING_TOKENS: [&str; 4] = ["", "NA", "NaN", "nan"];

/// Column selection for CSV ingestion.
#[derive(Debug, Clone)]
pub struct CsvLayout {
    pub outcome: String,
    /// Predictor columns in order; `None` takes every remaining column.
    pub predictors: Option<Vec<String>>,
    /// Study identifier column for long files.
    pub study_column: String,
}

impl CsvLayout {
    pub fn new(outcome: impl Into<String>) -> Self {
        Self {
            outcome: outcome.into(),
            predictors: None,
            study_column: "study_id".to_string(),
        }
    }
}

struct Columns {
    names: Vec<String>,
    outcome: usize,
    predictors: Vec<usize>,
    study: Option<usize>,
}

fn resolve_columns(source: &str, header: &csv::StringRecord, layout: &CsvLayout, long: bool) -> Result<Columns> {
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::InvalidInput(format!("'{source}': column '{name}' not found in header")))
    };
    let outcome = find(&layout.outcome)?;
    let study = if long { Some(find(&layout.study_column)?) } else { None };
    let predictors: Vec<usize> = match &layout.predictors {
        Some(names) => names.iter().map(|n| find(n)).collect::<Result<_>>()?,
        None => (0..header.len())
            .filter(|&i| i != outcome && Some(i) != study)
            .collect(),
    };
    if predictors.is_empty() {
        return Err(Error::InvalidInput(format!("'{source}': no predictor columns")));
    }
    Ok(Columns {
        names: header.iter().map(|h| h.trim().to_string()).collect(),
        outcome,
        predictors,
        study,
    })
}

fn parse_cell(source: &str, row: usize, column: &str, cell: &str) -> Result<f64> {
    let cell = cell.trim();
    if MISSING_TOKENS.contains(&cell) {
        return Err(Error::MissingValue {
            source_name: source.to_string(),
            row,
            column: column.to_string(),
        });
    }
    cell.parse::<f64>().map_err(|_| {
        Error::InvalidInput(format!(
            "'{source}': non-numeric value '{cell}' at data row {row}, column '{column}'"
        ))
    })
}

struct Rows {
    x: Vec<f64>,
    y: Vec<f64>,
}

impl Rows {
    fn into_study(self, id: String, p: usize) -> Result<Study> {
        let n = self.y.len();
        Study::new(id, DMatrix::from_row_slice(n, p, &self.x), DVector::from_vec(self.y))
    }
}

/// Reads one study from a CSV file. Returns predictor names and the study.
pub fn read_study_csv(path: impl AsRef<Path>, id: &str, layout: &CsvLayout) -> Result<(Vec<String>, Study)> {
    let path = path.as_ref();
    let source = path.display().to_string();
    let mut reader = csv::Reader::from_path(path)?;
    let header = reader.headers()?.clone();
    let cols = resolve_columns(&source, &header, layout, false)?;
    let mut rows = Rows {
        x: Vec::new(),
        y: Vec::new(),
    };
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        push_record(&source, r + 1, &cols, &record, &mut rows)?;
    }
    let names = cols.predictors.iter().map(|&i| cols.names[i].clone()).collect();
    Ok((names, rows.into_study(id.to_string(), cols.predictors.len())?))
}

/// Reads several studies from one long CSV file, in order of first
/// appearance of each study identifier.
pub fn read_long_csv(path: impl AsRef<Path>, layout: &CsvLayout) -> Result<(Vec<String>, Vec<Study>)> {
    let path = path.as_ref();
    let source = path.display().to_string();
    let mut reader = csv::Reader::from_path(path)?;
    let header = reader.headers()?.clone();
    let cols = resolve_columns(&source, &header, layout, true)?;
    let study_col = cols.study.expect("long layout has a study column");
    let mut ids: Vec<String> = Vec::new();
    let mut blocks: Vec<Rows> = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let id = record.get(study_col).unwrap_or("").trim();
        if id.is_empty() {
            return Err(Error::MissingValue {
                source_name: source.clone(),
                row: r + 1,
                column: layout.study_column.clone(),
            });
        }
        let k = match ids.iter().position(|s| s == id) {
            Some(k) => k,
            None => {
                ids.push(id.to_string());
                blocks.push(Rows {
                    x: Vec::new(),
                    y: Vec::new(),
                });
                ids.len() - 1
            }
        };
        push_record(&source, r + 1, &cols, &record, &mut blocks[k])?;
    }
    let p = cols.predictors.len();
    let names = cols.predictors.iter().map(|&i| cols.names[i].clone()).collect();
    let studies = ids
        .into_iter()
        .zip(blocks)
        .map(|(id, rows)| rows.into_study(id, p))
        .collect::<Result<Vec<_>>>()?;
    Ok((names, studies))
}

fn push_record(source: &str, row: usize, cols: &Columns, record: &csv::StringRecord, rows: &mut Rows) -> Result<()> {
    let cell = |i: usize| parse_cell(source, row, &cols.names[i], record.get(i).unwrap_or(""));
    rows.y.push(cell(cols.outcome)?);
    for &i in &cols.predictors {
        rows.x.push(cell(i)?);
    }
    Ok(())
}
