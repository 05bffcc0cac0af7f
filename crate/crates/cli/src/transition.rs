use std::path::Path;

use msboost::linear_boost::{aicc_stop, prediction_map, LinearLearner, Stopping};
use msboost::transition::{TransitionInputs, TransitionReport, TransitionTerms};
use nalgebra::DVector;
use serde::Serialize;

use crate::config::{Learner, LoadedConfig, MeanSource};
use crate::data;
use crate::error::{CliError, CliResult};
use crate::output::write_file;

/// Machine-readable transition output.
#[derive(Debug, Serialize)]
pub struct TransitionRecord {
    pub report: TransitionReport,
    pub k: usize,
    pub p: usize,
    pub q: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub lambda: f64,
    pub eta: f64,
    pub m_merge: usize,
    pub m_study: Vec<usize>,
    pub weights: Vec<f64>,
    pub g_diag: Vec<f64>,
    pub sigma_eps2: f64,
    pub config_hash: String,
}

pub fn run(cfg: &LoadedConfig, out: &Path) -> CliResult<()> {
    let section = cfg
        .config
        .data
        .as_ref()
        .ok_or_else(|| CliError::Config("transition needs a [data] table".into()))?;
    let variance = cfg
        .config
        .variance
        .as_ref()
        .ok_or_else(|| CliError::Config("transition needs a [variance] table".into()))?;
    let model = cfg.config.model.clone().unwrap_or_default();
    if model.learner() != Learner::Ridge {
        return Err(CliError::Config("transition requires model.learner = \"ridge\"".into()));
    }
    if section.test.is_none() {
        return Err(CliError::Config("transition needs data.test".into()));
    }
    let stopping = data::stopping(&model)?;
    let loaded = data::load(cfg, section)?;
    let data = &loaded.expanded;
    let k = data.k();
    if k < 2 {
        return Err(CliError::Config(format!(
            "K must exceed 1: transition needs at least two training studies, found {k}"
        )));
    }
    if data.test.is_empty() {
        return Err(CliError::Config("data.test holds no studies".into()));
    }
    let q = section.random_effect_columns.len();
    if variance.g_diag.len() != q {
        return Err(CliError::Config(format!(
            "variance.g_diag has {} entries but {q} random-effect columns are configured",
            variance.g_diag.len()
        )));
    }
    let weights = data::weights(&model, k)?;

    let stop_at = |unit: &msboost::dataset::DesignData| -> CliResult<usize> {
        Ok(match stopping {
            Stopping::Fixed(m) => m,
            Stopping::Aicc { m_upp } => {
                let learner = LinearLearner::new(&unit.design.xt, model.lambda)?;
                aicc_stop(&unit.y, &learner, model.eta, m_upp)?.m_stop
            }
        })
    };
    let test_raw = data::stacked_test(data);
    let m_merge = stop_at(&data.merged)?;
    let l_merge = prediction_map(&data.merged, model.lambda, model.eta, m_merge, &test_raw)?;
    let mut m_study = Vec::with_capacity(k);
    let mut l_study = Vec::with_capacity(k);
    for unit in &data.studies {
        let m = stop_at(unit)?;
        l_study.push(prediction_map(unit, model.lambda, model.eta, m, &test_raw)?);
        m_study.push(m);
    }
    let (f_train, f_test) = data::mean_vectors(data, variance.mean)?;
    let g = DVector::from_column_slice(&variance.g_diag);
    let inputs = TransitionInputs {
        l_merge,
        l_study,
        z_train: data.studies.iter().map(|u| u.design.z_raw()).collect(),
        z_test: data
            .test
            .iter()
            .map(|t| t.raw.select_columns(&section.random_effect_columns))
            .collect(),
        f_train,
        f_test,
        weights: weights.clone(),
        sigma_eps2: variance.sigma_eps2,
        g_diag: g.clone(),
        p: data.p(),
    };
    inputs.validate().map_err(|e| CliError::Config(e.to_string()))?;
    let terms = TransitionTerms::new(&inputs)?;
    let sigma_bar2 = variance.sigma_bar2.unwrap_or_else(|| inputs.sigma_bar2());
    let report = terms.report(&g, sigma_bar2);

    let mean_label = match variance.mean {
        MeanSource::MergedFit => "merged least-squares fit",
        MeanSource::Zero => "zero",
    };
    let text = format!(
        "training studies K      : {k}\n\
         basis columns P         : {}\n\
         random effects Q        : {q}\n\
         ridge lambda            : {}\n\
         stopping m (merged)     : {m_merge}\n\
         stopping m (studies)    : {m_study:?}\n\
         mean for bias terms     : {mean_label}\n\
         {report}\n",
        data.p(),
        model.lambda,
    );
    let record = TransitionRecord {
        report,
        k,
        p: data.p(),
        q,
        n_train: data.merged.design.n(),
        n_test: test_raw.nrows(),
        lambda: model.lambda,
        eta: model.eta,
        m_merge,
        m_study,
        weights,
        g_diag: variance.g_diag.clone(),
        sigma_eps2: variance.sigma_eps2,
        config_hash: cfg.hash.clone(),
    };
    let json = serde_json::to_string_pretty(&record).map_err(|e| CliError::Runtime(e.to_string()))?;
    write_file(&out.join("transition_report.txt"), &text)?;
    write_file(&out.join("transition_report.json"), &(json + "\n"))?;
    print!("{text}");
    Ok(())
}
