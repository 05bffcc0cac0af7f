use std::path::Path;

use log::warn;
use msboost::cw_boost::cw_aicc_stop;
use msboost::linear_boost::Stopping;
use msboost::selective::{combine_ensemble, ConditionalMoments, GaussianModel};
use msboost::sim::{is_degenerate, TargetPath};
use nalgebra::DVector;

use crate::config::{Learner, LoadedConfig};
use crate::data;
use crate::error::{CliError, CliResult};
use crate::output::{num, write_csv};

pub const CMSE_COLUMNS: [&str; 7] = [
    "m",
    "cmse_merge",
    "cmse_ens",
    "mean_merge",
    "variance_merge",
    "mean_ens",
    "variance_ens",
];

pub fn run(cfg: &LoadedConfig, out: &Path) -> CliResult<()> {
    let section = cfg
        .config
        .data
        .as_ref()
        .ok_or_else(|| CliError::Config("cmse needs a [data] table".into()))?;
    let variance = cfg
        .config
        .variance
        .as_ref()
        .ok_or_else(|| CliError::Config("cmse needs a [variance] table".into()))?;
    let target = cfg
        .config
        .cmse
        .as_ref()
        .ok_or_else(|| CliError::Config("cmse needs a [cmse] table".into()))?;
    let model = cfg.config.model.clone().unwrap_or_default();
    if model.learner == Some(Learner::Ridge) {
        return Err(CliError::Config(
            "cmse requires model.learner = \"componentwise\"".into(),
        ));
    }
    let stopping = data::stopping(&model)?;
    let loaded = data::load(cfg, section)?;
    let data = &loaded.expanded;
    let j = target.target_column;
    if j >= data.p() {
        return Err(CliError::Config(format!(
            "cmse.target_column {j} out of range (P = {})",
            data.p()
        )));
    }
    let q = section.random_effect_columns.len();
    if variance.g_diag.len() != q {
        return Err(CliError::Config(format!(
            "variance.g_diag has {} entries but {q} random-effect columns are configured",
            variance.g_diag.len()
        )));
    }
    let weights = data::weights(&model, data.k())?;
    let m_max = match (target.m_max, stopping) {
        (Some(m), _) | (None, Stopping::Fixed(m)) => m,
        (None, Stopping::Aicc { m_upp }) => {
            cw_aicc_stop(&data.merged.y, &data.merged.design.xt, model.eta, m_upp)?.m_stop
        }
    };
    if m_max == 0 {
        return Err(CliError::Config(
            "the conditional-MSE curve needs at least one iteration".into(),
        ));
    }

    let g = DVector::from_column_slice(&variance.g_diag);
    let (f_train, _) = data::mean_vectors(data, variance.mean)?;
    let z_train: Vec<_> = data.studies.iter().map(|u| u.design.z_raw()).collect();
    let mu = DVector::from_iterator(data.merged.design.n(), f_train.iter().flat_map(|f| f.iter().copied()));
    let merged_model = GaussianModel::from_blocks(mu, &z_train, g.clone(), variance.sigma_eps2)?;
    let merged = TargetPath::build(&data.merged, m_max, model.eta, merged_model, j)?;
    let studies = data
        .studies
        .iter()
        .zip(f_train.iter().zip(&z_train))
        .map(|(unit, (f, z))| {
            let model_k = GaussianModel::single(f.clone(), z, g.clone(), variance.sigma_eps2)?;
            TargetPath::build(unit, m_max, model.eta, model_k, j)
        })
        .collect::<msboost::Result<Vec<_>>>()?;

    let beta = target.target_beta;
    let mut rows = Vec::with_capacity(m_max);
    let mut degenerate = 0;
    for m in 1..=m_max {
        let merged_m = merged.moments(m);
        let study_m: msboost::Result<Vec<ConditionalMoments>> = studies.iter().map(|s| s.moments(m)).collect();
        match (merged_m, study_m) {
            (Ok(mm), Ok(sm)) => {
                let ens = combine_ensemble(&sm, &weights, beta)?;
                rows.push(vec![
                    m.to_string(),
                    num((mm.mean - beta).powi(2) + mm.variance),
                    num(ens.mse),
                    num(mm.mean),
                    num(mm.variance),
                    num(ens.mean),
                    num(ens.variance),
                ]);
            }
            (Err(e), _) | (_, Err(e)) if is_degenerate(&e) => {
                warn!("iteration {m}: {e}");
                degenerate += 1;
                let mut row = vec![String::new(); CMSE_COLUMNS.len()];
                row[0] = m.to_string();
                rows.push(row);
            }
            (Err(e), _) | (_, Err(e)) => return Err(e.into()),
        }
    }
    let path = out.join("cmse.csv");
    write_csv(&path, &CMSE_COLUMNS, &rows)?;
    println!(
        "conditional MSE of column {j} ({}) over m = 1..={m_max}: {}",
        loaded.column_names[j],
        path.display()
    );
    if degenerate > 0 {
        eprintln!("warning: {degenerate} iteration(s) had degenerate truncation intervals; their cells are empty");
    }
    Ok(())
}
