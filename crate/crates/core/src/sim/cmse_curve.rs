//! Conditional MSE of one component-wise boosting coefficient along the
//! boosting path, for the merged and ensemble estimators.
//!
//! Each replicate conditions on its own realized selection path. Moments are
//! reported on the raw predictor scale: the standardized coefficient of
//! column j is divided by that column's scale.

use log::{info, warn};
use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::generator::{draw_outcomes, GeneratorSpec, PredictorDraw, PredictorSampler};
use super::result::{ExperimentKind, ExperimentResult, ResultRow, SummaryRow};
use super::seed::{rng_for, OUTCOME_STREAM, PREDICTOR_STREAM};
use crate::cw_boost::{boost_componentwise, build_selection_path, SelectionPath};
use crate::dataset::{expand, DesignData};
use crate::error::{Error, Result};
use crate::linear_boost::{equal_weights, DEFAULT_ETA};
use crate::selective::{combine_ensemble, limits_for_contrast, ConditionalMoments, GaussianModel};
use crate::transition::equal_variance_g;

/// Expanded column of the default target coefficient.
pub const DEFAULT_TARGET_COLUMN: usize = 5;
pub const DEFAULT_TARGET_BETA: f64 = 1.72;
pub const DEFAULT_M_MAX: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmseConfig {
    pub generator: GeneratorSpec,
    /// Heterogeneity levels; G is equal-variance with tr(G)/P = σ̄².
    pub sigma_bar2_values: Vec<f64>,
    pub replicates: usize,
    pub m_max: usize,
    pub eta: f64,
    /// Expanded column of the coefficient.
    pub target_column: usize,
    /// True value used for the bias.
    pub target_beta: f64,
}

impl CmseConfig {
    pub fn new(generator: GeneratorSpec, sigma_bar2_values: Vec<f64>, replicates: usize) -> Self {
        Self {
            generator,
            sigma_bar2_values,
            replicates,
            m_max: DEFAULT_M_MAX,
            eta: DEFAULT_ETA,
            target_column: DEFAULT_TARGET_COLUMN,
            target_beta: DEFAULT_TARGET_BETA,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        if self.replicates < 1 || self.m_max < 1 {
            return Err(Error::InvalidInput("replicates and m_max must be positive".into()));
        }
        let width = self.generator.mean_function.basis.width();
        if self.target_column >= width {
            return Err(Error::InvalidInput(format!(
                "target column {} out of range (P = {width})",
                self.target_column
            )));
        }
        if self.sigma_bar2_values.is_empty() || self.sigma_bar2_values.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return Err(Error::InvalidInput(
                "sigma_bar2 values must be finite and nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// A component-wise fit of one unit with the model of its raw outcomes,
/// tracking one target coefficient along the path.
#[derive(Debug, Clone)]
pub struct TargetPath {
    pub path: SelectionPath,
    pub model: GaussianModel,
    y_raw: DVector<f64>,
    target: usize,
    scale: f64,
    /// Contrast of the target after each iteration 1..=M.
    v_target: Vec<DVector<f64>>,
}

impl TargetPath {
    /// Boosts `unit` for `m` iterations and records the target's contrast.
    pub fn build(unit: &DesignData, m: usize, eta: f64, model: GaussianModel, target: usize) -> Result<Self> {
        let xt = &unit.design.xt;
        if target >= xt.ncols() {
            return Err(Error::InvalidInput(format!(
                "target column {target} out of range (P = {})",
                xt.ncols()
            )));
        }
        let fit = boost_componentwise(&unit.y, xt, eta, m)?;
        let path = build_selection_path(&fit, xt)?;
        let x = xt.column(target);
        let norm2 = x.norm_squared();
        let mut v = DVector::zeros(xt.nrows());
        let mut v_target = Vec::with_capacity(m);
        for (ups, &j) in path.upsilon.iter().zip(&path.selected) {
            if j == target {
                v += ups.tr_mul(&x) * (eta / norm2);
            }
            v_target.push(v.clone());
        }
        Ok(Self {
            path,
            model,
            y_raw: unit.y_raw.clone(),
            target,
            scale: unit.design.scaling.scale[target],
            v_target,
        })
    }

    pub fn m(&self) -> usize {
        self.v_target.len()
    }

    /// Moments on the raw predictor scale after the first `m` iterations
    /// (1 ≤ m ≤ M). Γ and v annihilate constants, so the path applies to the
    /// raw outcome.
    pub fn moments(&self, m: usize) -> Result<ConditionalMoments> {
        if m == 0 || m > self.m() {
            return Err(Error::InvalidInput(format!("iteration {m} outside 1..={}", self.m())));
        }
        if !self.path.selected[..m].contains(&self.target) {
            return Ok(ConditionalMoments {
                mean: 0.0,
                variance: 0.0,
                params: None,
            });
        }
        if self.scale == 0.0 {
            return Err(Error::DegenerateContrast(0.0));
        }
        let rows = 2 * m * (self.path.p() - 1);
        let gamma = self.path.gamma.rows(0, rows).into_owned();
        let limits = limits_for_contrast(&gamma, &self.v_target[m - 1], &self.model, &self.y_raw)?;
        let (mean, variance) = limits.params.moments()?;
        Ok(ConditionalMoments {
            mean,
            variance,
            params: Some(limits.params),
        }
        .scaled(1.0 / self.scale))
    }
}

/// Whether an error marks a degenerate truncation rather than a failure.
pub fn is_degenerate(e: &Error) -> bool {
    matches!(e, Error::DegenerateContrast(_) | Error::EmptyTruncation { .. })
}

/// Per-iteration (cmse_merge, cmse_ens); `None` where a truncation interval
/// was degenerate.
fn run_unit(
    cfg: &CmseConfig,
    sampler: &PredictorSampler,
    replicate: usize,
    gi: usize,
) -> Result<Vec<Option<(f64, f64)>>> {
    let spec = &cfg.generator;
    let p = spec.mean_function.basis.width();
    let re_cols = spec.random_effect_columns();
    let rep = replicate as u64;
    let mut rng = rng_for(spec.seed, &[PREDICTOR_STREAM, rep]);
    let predictors = PredictorDraw::draw(spec, sampler, &mut rng)?;
    let g = equal_variance_g(cfg.sigma_bar2_values[gi], spec.q(), p);
    let mut rng = rng_for(spec.seed, &[OUTCOME_STREAM, rep, gi as u64]);
    let generated = draw_outcomes(spec, &predictors, g.as_slice(), &mut rng)?;
    let data = expand(&generated.dataset, &spec.mean_function.basis, &re_cols)?;
    let target = cfg.target_column;

    let mu_stacked = DVector::from_iterator(
        data.merged.design.n(),
        generated.f_train.iter().flat_map(|f| f.iter().copied()),
    );
    let merged_model = GaussianModel::from_blocks(mu_stacked, &generated.z_train, g.clone(), spec.sigma_eps2)?;
    let merged = TargetPath::build(&data.merged, cfg.m_max, cfg.eta, merged_model, target)?;
    let studies = data
        .studies
        .iter()
        .zip(generated.f_train.iter().zip(&generated.z_train))
        .map(|(unit, (f, z))| {
            let model = GaussianModel::single(f.clone(), z, g.clone(), spec.sigma_eps2)?;
            TargetPath::build(unit, cfg.m_max, cfg.eta, model, target)
        })
        .collect::<Result<Vec<_>>>()?;
    let weights = equal_weights(studies.len());

    let mut out = Vec::with_capacity(cfg.m_max);
    for m in 1..=cfg.m_max {
        let merged_m = merged.moments(m);
        let study_m: Result<Vec<_>> = studies.iter().map(|s| s.moments(m)).collect();
        match (merged_m, study_m) {
            (Ok(mm), Ok(sm)) => {
                let cm = (mm.mean - cfg.target_beta).powi(2) + mm.variance;
                let ce = combine_ensemble(&sm, &weights, cfg.target_beta)?.mse;
                out.push(Some((cm, ce)));
            }
            (Err(e), _) | (_, Err(e)) if is_degenerate(&e) => out.push(None),
            (Err(e), _) | (_, Err(e)) => return Err(e),
        }
    }
    Ok(out)
}

/// Conditional-MSE curves averaged over replicates at each σ̄².
pub fn run_conditional_mse_curve(cfg: &CmseConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let spec = &cfg.generator;
    let sampler = PredictorSampler::from_source(&spec.predictor_source, spec.mean_function.p())?;
    info!(
        "conditional MSE curves: {} replicates x {} levels, m up to {}",
        cfg.replicates,
        cfg.sigma_bar2_values.len(),
        cfg.m_max
    );
    let units: Vec<(usize, usize)> = (0..cfg.sigma_bar2_values.len())
        .flat_map(|gi| (0..cfg.replicates).map(move |r| (gi, r)))
        .collect();
    let curves = units
        .par_iter()
        .map(|&(gi, r)| run_unit(cfg, &sampler, r, gi))
        .collect::<Result<Vec<_>>>()?;

    let kind = ExperimentKind::CmseCurve;
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    let mut dropped_total = 0;
    for (gi, &sigma_bar2) in cfg.sigma_bar2_values.iter().enumerate() {
        let block = &curves[gi * cfg.replicates..(gi + 1) * cfg.replicates];
        for m in 1..=cfg.m_max {
            let (mut sm, mut se, mut used) = (0.0, 0.0, 0usize);
            for (r, curve) in block.iter().enumerate() {
                let cell = curve[m - 1];
                if let Some((cm, ce)) = cell {
                    sm += cm;
                    se += ce;
                    used += 1;
                }
                rows.push(ResultRow {
                    experiment: kind,
                    grid_sigma_bar2: sigma_bar2,
                    replicate: Some(r),
                    m: Some(m),
                    mspe_merge: None,
                    mspe_ens: None,
                    log_ratio: None,
                    cmse_merge: cell.map(|c| c.0),
                    cmse_ens: cell.map(|c| c.1),
                    tau: None,
                    tau1: None,
                    tau2: None,
                });
            }
            let dropped = cfg.replicates - used;
            dropped_total += dropped;
            summary.push(SummaryRow {
                experiment: kind,
                grid_sigma_bar2: sigma_bar2,
                m: Some(m),
                replicates: used,
                mean_log_ratio: None,
                ci_lower: None,
                ci_upper: None,
                mean_mspe_merge: None,
                mean_mspe_ens: None,
                cmse_merge: (used > 0).then(|| sm / used as f64),
                cmse_ens: (used > 0).then(|| se / used as f64),
                dropped,
                tau: None,
                tau1: None,
                tau2: None,
            });
        }
    }
    if dropped_total > 0 {
        warn!("{dropped_total} (replicate, iteration) cells dropped for degenerate truncation intervals");
    }
    Ok(ExperimentResult {
        kind,
        seed: spec.seed,
        rows,
        summary,
        crossing: None,
        dropped_truncations: dropped_total,
        overlay: None,
    })
}
