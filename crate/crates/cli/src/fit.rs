use std::path::Path;

use msboost::cw_boost::fit_componentwise;
use msboost::dataset::DesignData;
use msboost::linear_boost::{fit_linear, Stopping};
use nalgebra::DVector;

use crate::config::{Learner, LoadedConfig, ModelSection, Strategy};
use crate::data;
use crate::error::{CliError, CliResult};
use crate::output::{num, write_csv};

struct UnitFit {
    id: String,
    m_stop: usize,
    /// Standardized-scale coefficients.
    coefficients: DVector<f64>,
    /// Raw-basis-scale coefficients and intercept.
    raw: DVector<f64>,
    intercept_std: f64,
    intercept_raw: f64,
    /// (column, sign, slope) per iteration for component-wise fits.
    selections: Vec<(usize, f64, f64)>,
}

fn fit_unit(unit: &DesignData, model: &ModelSection, stopping: Stopping) -> CliResult<UnitFit> {
    let (coefficients, m_stop, selections) = match model.learner() {
        Learner::Ridge => {
            let fit = fit_linear(unit, model.lambda, model.eta, stopping)?;
            (fit.coefficients, fit.m_stop, Vec::new())
        }
        Learner::Componentwise => {
            let fit = fit_componentwise(unit, model.eta, stopping)?;
            let selections = fit
                .selected
                .iter()
                .zip(&fit.signs)
                .zip(&fit.steps)
                .map(|((&j, &s), &b)| (j, s, b))
                .collect();
            (fit.coefficients, fit.m_stop, selections)
        }
    };
    let scaling = &unit.design.scaling;
    let raw = DVector::from_fn(coefficients.len(), |j, _| {
        if scaling.scale[j] == 0.0 {
            0.0
        } else {
            coefficients[j] / scaling.scale[j]
        }
    });
    let shift: f64 = raw.iter().zip(&scaling.center).map(|(b, c)| b * c).sum();
    Ok(UnitFit {
        id: unit.id.clone(),
        m_stop,
        coefficients,
        intercept_std: unit.y_center,
        intercept_raw: unit.y_center - shift,
        raw,
        selections,
    })
}

fn coefficient_rows(fit: &UnitFit, names: &[String], rows: &mut Vec<Vec<String>>) {
    rows.push(vec![
        fit.id.clone(),
        String::new(),
        "(intercept)".into(),
        num(fit.intercept_std),
        num(fit.intercept_raw),
    ]);
    for (j, name) in names.iter().enumerate() {
        rows.push(vec![
            fit.id.clone(),
            j.to_string(),
            name.clone(),
            num(fit.coefficients[j]),
            num(fit.raw[j]),
        ]);
    }
}

pub fn run(cfg: &LoadedConfig, out: &Path) -> CliResult<()> {
    let section = cfg
        .config
        .data
        .as_ref()
        .ok_or_else(|| CliError::Config("fit needs a [data] table".into()))?;
    let model = cfg.config.model.clone().unwrap_or_default();
    let stopping = data::stopping(&model)?;
    let loaded = data::load(cfg, section)?;
    let data = &loaded.expanded;
    let names = &loaded.column_names;
    let weights = data::weights(&model, data.k())?;
    let learner = match model.learner() {
        Learner::Ridge => "ridge",
        Learner::Componentwise => "componentwise",
    };

    let merged = match model.strategy {
        Strategy::Merged | Strategy::Both => Some(fit_unit(&data.merged, &model, stopping)?),
        Strategy::Ensemble => None,
    };
    let studies = match model.strategy {
        Strategy::Ensemble | Strategy::Both => data
            .studies
            .iter()
            .map(|u| fit_unit(u, &model, stopping))
            .collect::<CliResult<Vec<_>>>()?,
        Strategy::Merged => Vec::new(),
    };

    let mut coef_rows = Vec::new();
    let mut summary_rows = Vec::new();
    let mut selection_rows = Vec::new();
    let units: Vec<(&UnitFit, &DesignData)> = merged
        .iter()
        .map(|f| (f, &data.merged))
        .chain(studies.iter().zip(&data.studies))
        .collect();
    for (fit, unit) in &units {
        coefficient_rows(fit, names, &mut coef_rows);
        summary_rows.push(vec![
            fit.id.clone(),
            learner.into(),
            unit.design.n().to_string(),
            if model.learner() == Learner::Ridge {
                num(model.lambda)
            } else {
                String::new()
            },
            num(model.eta),
            fit.m_stop.to_string(),
        ]);
        for (i, &(j, sign, slope)) in fit.selections.iter().enumerate() {
            selection_rows.push(vec![
                fit.id.clone(),
                (i + 1).to_string(),
                j.to_string(),
                names[j].clone(),
                num(sign),
                num(slope),
            ]);
        }
    }
    if !studies.is_empty() {
        let combine = |f: &dyn Fn(&UnitFit) -> f64| studies.iter().zip(&weights).map(|(s, w)| w * f(s)).sum::<f64>();
        let p = data.p();
        let ensemble = UnitFit {
            id: "ensemble".into(),
            m_stop: 0,
            coefficients: DVector::from_fn(p, |j, _| combine(&|s| s.coefficients[j])),
            raw: DVector::from_fn(p, |j, _| combine(&|s| s.raw[j])),
            intercept_std: combine(&|s| s.intercept_std),
            intercept_raw: combine(&|s| s.intercept_raw),
            selections: Vec::new(),
        };
        coefficient_rows(&ensemble, names, &mut coef_rows);
    }

    write_csv(
        &out.join("coefficients.csv"),
        &["unit", "column", "name", "coefficient", "coefficient_raw"],
        &coef_rows,
    )?;
    write_csv(
        &out.join("fit_summary.csv"),
        &["unit", "learner", "n", "lambda", "eta", "m_stop"],
        &summary_rows,
    )?;
    if model.learner() == Learner::Componentwise {
        write_csv(
            &out.join("selections.csv"),
            &["unit", "iteration", "column", "name", "sign", "slope"],
            &selection_rows,
        )?;
    }
    if !data.test.is_empty() {
        let mut rows = Vec::new();
        for t in &data.test {
            let merged_pred = merged.as_ref().map(|f| data.merged.predict(&f.coefficients, &t.raw));
            let ens_pred = (!studies.is_empty()).then(|| {
                let mut acc = DVector::zeros(t.raw.nrows());
                for ((fit, unit), w) in studies.iter().zip(&data.studies).zip(&weights) {
                    acc += unit.predict(&fit.coefficients, &t.raw) * *w;
                }
                acc
            });
            for i in 0..t.raw.nrows() {
                rows.push(vec![
                    t.id.clone(),
                    i.to_string(),
                    num(t.y[i]),
                    merged_pred.as_ref().map(|v| num(v[i])).unwrap_or_default(),
                    ens_pred.as_ref().map(|v| num(v[i])).unwrap_or_default(),
                ]);
            }
        }
        write_csv(
            &out.join("predictions.csv"),
            &["study", "row", "y", "merged", "ensemble"],
            &rows,
        )?;
    }
    println!(
        "fitted {} unit(s) with the {learner} learner; outputs in {}",
        units.len(),
        out.display()
    );
    Ok(())
}
