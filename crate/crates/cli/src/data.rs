//! Loading user data and the pieces shared by the data-driven commands.

use msboost::dataset::{expand, BasisSpec, BasisTerm, ExpandedDataset, MultiStudyDataset, Study};
use msboost::io::{read_long_csv, read_study_csv, CsvLayout};
use msboost::linear_boost::{equal_weights, validate_weights, Stopping};
use nalgebra::{DMatrix, DVector};

use crate::config::{DataFiles, DataSection, FitStopping, LoadedConfig, MeanSource, ModelSection};
use crate::error::{CliError, CliResult};

pub struct LoadedData {
    pub expanded: ExpandedDataset,
    /// One name per expanded column.
    pub column_names: Vec<String>,
}

fn read_files(cfg: &LoadedConfig, files: &DataFiles, layout: &CsvLayout) -> CliResult<(Vec<String>, Vec<Study>)> {
    match files {
        DataFiles::Long(path) => Ok(read_long_csv(cfg.resolve(path), layout)?),
        DataFiles::PerStudy(paths) => {
            let mut names: Option<Vec<String>> = None;
            let mut studies = Vec::with_capacity(paths.len());
            for path in paths {
                let id = path
                    .file_stem()
                    .map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned());
                let (n, study) = read_study_csv(cfg.resolve(path), &id, layout)?;
                match &names {
                    Some(prev) if *prev != n => {
                        return Err(CliError::Runtime(format!(
                            "'{}' has predictors {n:?}, expected {prev:?}",
                            path.display()
                        )))
                    }
                    Some(_) => {}
                    None => names = Some(n),
                }
                studies.push(study);
            }
            Ok((names.unwrap_or_default(), studies))
        }
    }
}

/// Reads, expands and standardizes the configured training and test data.
pub fn load(cfg: &LoadedConfig, section: &DataSection) -> CliResult<LoadedData> {
    let layout = CsvLayout {
        outcome: section.outcome.clone(),
        predictors: section.predictors.clone(),
        study_column: section.study_column.clone(),
    };
    let (names, training) = read_files(cfg, &section.train, &layout)?;
    let test = match &section.test {
        Some(files) => {
            let (test_names, test) = read_files(cfg, files, &layout)?;
            if test_names != names {
                return Err(CliError::Runtime(format!(
                    "test predictors {test_names:?} differ from training predictors {names:?}"
                )));
            }
            test
        }
        None => Vec::new(),
    };
    let spec = match &section.basis {
        Some(terms) if terms.len() != names.len() => {
            return Err(CliError::Config(format!(
                "data.basis has {} terms but {} predictors were read",
                terms.len(),
                names.len()
            )))
        }
        Some(terms) => BasisSpec::new(terms.clone()).map_err(|e| CliError::Config(format!("data.basis: {e}")))?,
        None => BasisSpec::all_linear(names.len()),
    };
    let width = spec.width();
    if let Some(&c) = section.random_effect_columns.iter().find(|&&c| c >= width) {
        return Err(CliError::Config(format!(
            "data.random_effect_columns: column {c} out of range (P = {width})"
        )));
    }
    let column_names = column_names(&spec, &names);
    let dataset = MultiStudyDataset::new(names, training, test)?;
    let expanded = expand(&dataset, &spec, &section.random_effect_columns)?;
    Ok(LoadedData { expanded, column_names })
}

/// Names of expanded columns: the predictor name for linear terms and
/// name, name^2, name^3, (name-knot)^3+ for cubic terms.
pub fn column_names(spec: &BasisSpec, predictors: &[String]) -> Vec<String> {
    let mut out = Vec::with_capacity(spec.width());
    for (term, name) in spec.terms.iter().zip(predictors) {
        match term {
            BasisTerm::Linear => out.push(name.clone()),
            BasisTerm::TruncatedPowerCubic { knots } => {
                out.push(name.clone());
                out.push(format!("{name}^2"));
                out.push(format!("{name}^3"));
                out.extend(knots.iter().map(|k| format!("({name}-{k})^3+")));
            }
        }
    }
    out
}

pub fn stopping(model: &ModelSection) -> CliResult<Stopping> {
    match model.stopping {
        FitStopping::Aicc => Ok(Stopping::Aicc { m_upp: model.m_upp }),
        FitStopping::Fixed => match model.m {
            Some(m) => Ok(Stopping::Fixed(m)),
            None => Err(CliError::Config("model.stopping = \"fixed\" requires model.m".into())),
        },
    }
}

pub fn weights(model: &ModelSection, k: usize) -> CliResult<Vec<f64>> {
    match &model.weights {
        None => Ok(equal_weights(k)),
        Some(w) => {
            validate_weights(w, k).map_err(|e| CliError::Config(format!("model.weights: {e}")))?;
            Ok(w.clone())
        }
    }
}

/// Stacked raw basis rows of every test study.
pub fn stacked_test(data: &ExpandedDataset) -> DMatrix<f64> {
    let rows: usize = data.test.iter().map(|t| t.raw.nrows()).sum();
    let mut out = DMatrix::zeros(rows, data.p());
    let mut offset = 0;
    for t in &data.test {
        out.rows_mut(offset, t.raw.nrows()).copy_from(&t.raw);
        offset += t.raw.nrows();
    }
    out
}

/// Mean vectors at each training study's rows and at the stacked test rows.
pub fn mean_vectors(data: &ExpandedDataset, source: MeanSource) -> CliResult<(Vec<DVector<f64>>, DVector<f64>)> {
    let test = stacked_test(data);
    match source {
        MeanSource::Zero => Ok((
            data.studies.iter().map(|s| DVector::zeros(s.design.n())).collect(),
            DVector::zeros(test.nrows()),
        )),
        MeanSource::MergedFit => {
            let merged = &data.merged;
            // the columns of xt are centered, so this is least squares with an intercept
            let beta = merged
                .design
                .xt
                .clone()
                .svd(true, true)
                .solve(&merged.y, 1e-10)
                .map_err(|e| CliError::Runtime(format!("least-squares mean fit failed: {e}")))?;
            let fitted = &merged.design.xt * &beta;
            let f_train = merged
                .design
                .study_rows
                .iter()
                .map(|r| fitted.rows(r.start, r.len()).add_scalar(merged.y_center))
                .collect();
            Ok((f_train, merged.predict(&beta, &test)))
        }
    }
}
