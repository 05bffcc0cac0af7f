//! Merged-versus-ensemble prediction error over a grid of heterogeneity
//! levels, with the analytic transition point overlaid.

use log::{debug, info};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::generator::{draw_outcomes, GeneratedData, GeneratorSpec, PredictorDraw, PredictorSampler};
use super::result::{
    bootstrap_mean_interval, crossing_bracket, ExperimentKind, ExperimentResult, ResultRow, SummaryRow,
};
use super::seed::{rng_for, OUTCOME_STREAM, PREDICTOR_STREAM, TUNING_STREAM};
use crate::cw_boost::fit_componentwise;
use crate::dataset::{expand, DesignData, ExpandedDataset};
use crate::error::{Error, Result};
use crate::linear_boost::{
    aicc_stop, equal_weights, fit_linear, prediction_map, LinearLearner, Stopping, DEFAULT_ETA, DEFAULT_M_UPP,
};
use crate::transition::{equal_variance_g, scaled_g, TransitionInputs, TransitionTerms};

/// Default ridge penalties searched on the tuning collection.
pub const DEFAULT_LAMBDA_GRID: [f64; 4] = [0.1, 1.0, 10.0, 100.0];
pub const DEFAULT_BOOTSTRAP_RESAMPLES: usize = 1000;

/// Base learner used in the sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SweepLearner {
    Ridge { lambda_grid: Vec<f64> },
    Componentwise,
}

impl Default for SweepLearner {
    fn default() -> Self {
        SweepLearner::Ridge {
            lambda_grid: DEFAULT_LAMBDA_GRID.to_vec(),
        }
    }
}

/// How stopping iterations are chosen in the sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HarnessStopping {
    /// AICc on the noiseless-heterogeneity tuning collection, then held fixed
    /// for every grid point of the replicate.
    Tuned {
        m_upp: usize,
    },
    /// AICc on each fit's own outcomes.
    PerFit {
        m_upp: usize,
    },
    Fixed {
        m: usize,
    },
}

impl Default for HarnessStopping {
    fn default() -> Self {
        HarnessStopping::Tuned { m_upp: DEFAULT_M_UPP }
    }
}

/// Pattern of the random-effect variances along the grid.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VarianceShape {
    #[default]
    Equal,
    /// G proportional to this diagonal.
    Proportional { shape: Vec<f64> },
}

impl VarianceShape {
    /// G with tr(G)/P = σ̄².
    pub fn g_at(&self, sigma_bar2: f64, q: usize, p: usize) -> DVector<f64> {
        match self {
            VarianceShape::Equal => equal_variance_g(sigma_bar2, q, p),
            VarianceShape::Proportional { shape } => scaled_g(&DVector::from_column_slice(shape), sigma_bar2, p),
        }
    }

    pub fn is_equal(&self) -> bool {
        match self {
            VarianceShape::Equal => true,
            VarianceShape::Proportional { shape } => {
                crate::transition::is_equal_variance(&DVector::from_column_slice(shape))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub generator: GeneratorSpec,
    pub grid: Vec<f64>,
    pub replicates: usize,
    pub learner: SweepLearner,
    pub eta: f64,
    pub stopping: HarnessStopping,
    pub variance: VarianceShape,
    pub bootstrap_resamples: usize,
}

impl SweepConfig {
    pub fn new(generator: GeneratorSpec, grid: Vec<f64>, replicates: usize) -> Self {
        Self {
            generator,
            grid,
            replicates,
            learner: SweepLearner::default(),
            eta: DEFAULT_ETA,
            stopping: HarnessStopping::default(),
            variance: VarianceShape::Equal,
            bootstrap_resamples: DEFAULT_BOOTSTRAP_RESAMPLES,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        if self.replicates < 2 {
            return Err(Error::InvalidInput("replicates must be at least 2".into()));
        }
        if self.grid.is_empty() || self.grid.iter().any(|g| !(*g >= 0.0) || !g.is_finite()) {
            return Err(Error::InvalidInput("grid values must be finite and nonnegative".into()));
        }
        if let SweepLearner::Ridge { lambda_grid } = &self.learner {
            if lambda_grid.is_empty() || lambda_grid.iter().any(|l| !(*l > 0.0)) {
                return Err(Error::InvalidInput("lambda grid must hold positive values".into()));
            }
        }
        if let VarianceShape::Proportional { shape } = &self.variance {
            if shape.len() != self.generator.q()
                || shape.iter().any(|s| !(*s >= 0.0))
                || shape.iter().sum::<f64>() <= 0.0
            {
                return Err(Error::InvalidInput(format!(
                    "variance shape needs {} nonnegative entries with a positive sum",
                    self.generator.q()
                )));
            }
        }
        if self.bootstrap_resamples == 0 {
            return Err(Error::InvalidInput("bootstrap_resamples must be positive".into()));
        }
        Ok(())
    }
}

/// Hyperparameters chosen on the tuning collection.
#[derive(Debug, Clone, PartialEq)]
pub struct Tuning {
    pub lambda_merge: f64,
    pub lambda_study: f64,
    pub m_merge: usize,
    pub m_study: Vec<usize>,
}

/// Raw test rows stacked across test studies.
fn stacked_test(data: &ExpandedDataset) -> (DMatrix<f64>, DVector<f64>) {
    let n: usize = data.test.iter().map(|t| t.raw.nrows()).sum();
    let p = data.p();
    let mut raw = DMatrix::zeros(n, p);
    let mut y = DVector::zeros(n);
    let mut off = 0;
    for t in &data.test {
        let m = t.raw.nrows();
        raw.rows_mut(off, m).copy_from(&t.raw);
        y.rows_mut(off, m).copy_from(&t.y);
        off += m;
    }
    (raw, y)
}

fn mspe(pred: &DVector<f64>, y: &DVector<f64>) -> f64 {
    (pred - y).norm_squared() / y.len() as f64
}

fn stopping_for(stopping: HarnessStopping, tuned_m: usize) -> Stopping {
    match stopping {
        HarnessStopping::Tuned { .. } => Stopping::Fixed(tuned_m),
        HarnessStopping::PerFit { m_upp } => Stopping::Aicc { m_upp },
        HarnessStopping::Fixed { m } => Stopping::Fixed(m),
    }
}

fn select_m(unit: &DesignData, learner: &LinearLearner, eta: f64, stopping: HarnessStopping) -> Result<usize> {
    match stopping {
        HarnessStopping::Tuned { m_upp } | HarnessStopping::PerFit { m_upp } => {
            Ok(aicc_stop(&unit.y, learner, eta, m_upp)?.m_stop)
        }
        HarnessStopping::Fixed { m } => Ok(m),
    }
}

/// Chooses λ by held-out MSPE and the stopping iterations on a collection
/// generated with G = 0.
pub fn tune_ridge(
    tuning: &ExpandedDataset,
    lambda_grid: &[f64],
    eta: f64,
    stopping: HarnessStopping,
) -> Result<Tuning> {
    let (test_raw, test_y) = stacked_test(tuning);
    let weights = equal_weights(tuning.k());
    let mut best_merge: Option<(f64, f64, usize)> = None;
    let mut best_study: Option<(f64, f64, Vec<usize>)> = None;
    for &lambda in lambda_grid {
        let learner = LinearLearner::new(&tuning.merged.design.xt, lambda)?;
        let m = select_m(&tuning.merged, &learner, eta, stopping)?;
        let fit = fit_linear(&tuning.merged, lambda, eta, Stopping::Fixed(m))?;
        let err = mspe(&tuning.merged.predict(&fit.coefficients, &test_raw), &test_y);
        if best_merge.as_ref().is_none_or(|b| err < b.0) {
            best_merge = Some((err, lambda, m));
        }
        let mut pred = DVector::zeros(test_y.len());
        let mut ms = Vec::with_capacity(tuning.k());
        for (unit, w) in tuning.studies.iter().zip(&weights) {
            let learner = LinearLearner::new(&unit.design.xt, lambda)?;
            let mk = select_m(unit, &learner, eta, stopping)?;
            let fit = fit_linear(unit, lambda, eta, Stopping::Fixed(mk))?;
            pred += unit.predict(&fit.coefficients, &test_raw) * *w;
            ms.push(mk);
        }
        let err = mspe(&pred, &test_y);
        if best_study.as_ref().is_none_or(|b| err < b.0) {
            best_study = Some((err, lambda, ms));
        }
    }
    let (_, lambda_merge, m_merge) = best_merge.ok_or_else(|| Error::InvalidInput("empty lambda grid".into()))?;
    let (_, lambda_study, m_study) = best_study.ok_or_else(|| Error::InvalidInput("empty lambda grid".into()))?;
    Ok(Tuning {
        lambda_merge,
        lambda_study,
        m_merge,
        m_study,
    })
}

fn tune_componentwise(tuning: &ExpandedDataset, eta: f64, stopping: HarnessStopping) -> Result<Tuning> {
    let pick = |unit: &DesignData| -> Result<usize> {
        match stopping {
            HarnessStopping::Tuned { m_upp } | HarnessStopping::PerFit { m_upp } => {
                Ok(crate::cw_boost::cw_aicc_stop(&unit.y, &unit.design.xt, eta, m_upp)?.m_stop)
            }
            HarnessStopping::Fixed { m } => Ok(m),
        }
    };
    Ok(Tuning {
        lambda_merge: f64::NAN,
        lambda_study: f64::NAN,
        m_merge: pick(&tuning.merged)?,
        m_study: tuning.studies.iter().map(pick).collect::<Result<_>>()?,
    })
}

/// Transition inputs for ridge boosting with fixed hyperparameters on the
/// replicate's design; the G stored in the inputs is zero.
pub fn ridge_transition_inputs(
    data: &ExpandedDataset,
    generated: &GeneratedData,
    tuning: &Tuning,
    eta: f64,
    sigma_eps2: f64,
) -> Result<TransitionInputs> {
    let (test_raw, _) = stacked_test(data);
    let l_merge = prediction_map(&data.merged, tuning.lambda_merge, eta, tuning.m_merge, &test_raw)?;
    let l_study = data
        .studies
        .iter()
        .zip(&tuning.m_study)
        .map(|(unit, &m)| prediction_map(unit, tuning.lambda_study, eta, m, &test_raw))
        .collect::<Result<Vec<_>>>()?;
    let n_test = test_raw.nrows();
    let mut f_test = DVector::zeros(n_test);
    let mut off = 0;
    for f in &generated.f_test {
        f_test.rows_mut(off, f.len()).copy_from(f);
        off += f.len();
    }
    let q = generated.z_train.first().map_or(0, |z| z.ncols());
    let inputs = TransitionInputs {
        l_merge,
        l_study,
        z_train: generated.z_train.clone(),
        z_test: generated.z_test.clone(),
        f_train: generated.f_train.clone(),
        f_test,
        weights: equal_weights(data.k()),
        sigma_eps2,
        g_diag: DVector::zeros(q),
        p: data.p(),
    };
    inputs.validate()?;
    Ok(inputs)
}

/// One replicate's results across the grid.
#[derive(Debug, Clone)]
struct ReplicateOutcome {
    mspe: Vec<(f64, f64)>,
    terms: Option<TransitionTerms>,
}

fn stack_outcomes(data: &GeneratedData) -> DVector<f64> {
    let n = data.dataset.n_train();
    let mut y = DVector::zeros(n);
    let mut off = 0;
    for s in &data.dataset.training {
        y.rows_mut(off, s.n()).copy_from(&s.y);
        off += s.n();
    }
    y
}

fn run_replicate(cfg: &SweepConfig, sampler: &PredictorSampler, replicate: usize) -> Result<ReplicateOutcome> {
    let spec = &cfg.generator;
    let re_cols = spec.random_effect_columns();
    let p = spec.mean_function.basis.width();
    let q = spec.q();
    let rep = replicate as u64;

    let mut rng = rng_for(spec.seed, &[PREDICTOR_STREAM, rep]);
    let predictors = PredictorDraw::draw(spec, sampler, &mut rng)?;

    let mut rng = rng_for(spec.seed, &[TUNING_STREAM, rep]);
    let tuning_x = PredictorDraw::draw(spec, sampler, &mut rng)?;
    let tuning_data = draw_outcomes(spec, &tuning_x, &vec![0.0; q], &mut rng)?;
    let tuning_set = expand(&tuning_data.dataset, &spec.mean_function.basis, &re_cols)?;
    let tuning = match &cfg.learner {
        SweepLearner::Ridge { lambda_grid } => tune_ridge(&tuning_set, lambda_grid, cfg.eta, cfg.stopping)?,
        SweepLearner::Componentwise => tune_componentwise(&tuning_set, cfg.eta, cfg.stopping)?,
    };
    debug!("replicate {replicate}: tuning {tuning:?}");

    let weights = equal_weights(spec.k_train);
    let mut mspe_pairs = Vec::with_capacity(cfg.grid.len());
    let mut terms = None;
    let mut maps: Option<TransitionInputs> = None;
    for (gi, &sigma_bar2) in cfg.grid.iter().enumerate() {
        let g = cfg.variance.g_at(sigma_bar2, q, p);
        let mut rng = rng_for(spec.seed, &[OUTCOME_STREAM, rep, gi as u64]);
        let generated = draw_outcomes(spec, &predictors, g.as_slice(), &mut rng)?;
        let data = expand(&generated.dataset, &spec.mean_function.basis, &re_cols)?;
        let (test_raw, test_y) = stacked_test(&data);
        let pair = match (&cfg.learner, cfg.stopping) {
            (SweepLearner::Ridge { .. }, HarnessStopping::Tuned { .. } | HarnessStopping::Fixed { .. }) => {
                if maps.is_none() {
                    let fixed = match cfg.stopping {
                        HarnessStopping::Fixed { m } => Tuning {
                            m_merge: m,
                            m_study: vec![m; spec.k_train],
                            ..tuning.clone()
                        },
                        _ => tuning.clone(),
                    };
                    maps = Some(ridge_transition_inputs(
                        &data,
                        &generated,
                        &fixed,
                        cfg.eta,
                        spec.sigma_eps2,
                    )?);
                }
                let inputs = maps.as_ref().expect("maps built above");
                let pred_merge = &inputs.l_merge * stack_outcomes(&generated);
                let mut pred_ens = DVector::zeros(test_y.len());
                for ((l, s), w) in inputs.l_study.iter().zip(&generated.dataset.training).zip(&weights) {
                    pred_ens += l * &s.y * *w;
                }
                (mspe(&pred_merge, &test_y), mspe(&pred_ens, &test_y))
            }
            (SweepLearner::Ridge { .. }, HarnessStopping::PerFit { .. }) => {
                if maps.is_none() {
                    maps = Some(ridge_transition_inputs(
                        &data,
                        &generated,
                        &tuning,
                        cfg.eta,
                        spec.sigma_eps2,
                    )?);
                }
                let stop = stopping_for(cfg.stopping, 0);
                let merged = fit_linear(&data.merged, tuning.lambda_merge, cfg.eta, stop)?;
                let pred_merge = data.merged.predict(&merged.coefficients, &test_raw);
                let mut pred_ens = DVector::zeros(test_y.len());
                for (unit, w) in data.studies.iter().zip(&weights) {
                    let fit = fit_linear(unit, tuning.lambda_study, cfg.eta, stop)?;
                    pred_ens += unit.predict(&fit.coefficients, &test_raw) * *w;
                }
                (mspe(&pred_merge, &test_y), mspe(&pred_ens, &test_y))
            }
            (SweepLearner::Componentwise, _) => {
                let merged = fit_componentwise(&data.merged, cfg.eta, stopping_for(cfg.stopping, tuning.m_merge))?;
                let pred_merge = data.merged.predict(&merged.coefficients, &test_raw);
                let mut pred_ens = DVector::zeros(test_y.len());
                for ((unit, w), &mk) in data.studies.iter().zip(&weights).zip(&tuning.m_study) {
                    let fit = fit_componentwise(unit, cfg.eta, stopping_for(cfg.stopping, mk))?;
                    pred_ens += unit.predict(&fit.coefficients, &test_raw) * *w;
                }
                (mspe(&pred_merge, &test_y), mspe(&pred_ens, &test_y))
            }
        };
        mspe_pairs.push(pair);
    }
    if let Some(inputs) = &maps {
        terms = Some(TransitionTerms::new(inputs)?);
    }
    Ok(ReplicateOutcome {
        mspe: mspe_pairs,
        terms,
    })
}

/// Runs the sweep. Replicates run in parallel; every reduction is ordered
/// by index, so the result does not depend on the thread count.
pub fn run_transition_sweep(cfg: &SweepConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let spec = &cfg.generator;
    let sampler = PredictorSampler::from_source(&spec.predictor_source, spec.mean_function.p())?;
    info!(
        "transition sweep: {} replicates x {} grid points",
        cfg.replicates,
        cfg.grid.len()
    );
    let outcomes = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| run_replicate(cfg, &sampler, r))
        .collect::<Result<Vec<_>>>()?;

    let p = spec.mean_function.basis.width();
    let q = spec.q();
    let overlay = outcomes
        .iter()
        .map(|o| o.terms.clone())
        .collect::<Option<Vec<_>>>()
        .map(|t| TransitionTerms::mean(&t))
        .transpose()?;
    let shape_g = cfg.variance.g_at(1.0, q, p);
    let (tau, tau1, tau2) = match &overlay {
        Some(terms) if cfg.variance.is_equal() => (terms.transition_point(), None, None),
        Some(terms) => {
            let (t1, t2) = terms.transition_interval(&shape_g);
            (None, t1, t2)
        }
        None => (None, None, None),
    };

    let kind = ExperimentKind::TransitionSweep;
    let mut rows = Vec::with_capacity(cfg.replicates * cfg.grid.len());
    let mut summary = Vec::with_capacity(cfg.grid.len());
    let mut means = Vec::with_capacity(cfg.grid.len());
    for (gi, &sigma_bar2) in cfg.grid.iter().enumerate() {
        let mut logs = Vec::with_capacity(cfg.replicates);
        let (mut sum_m, mut sum_e) = (0.0, 0.0);
        for (r, o) in outcomes.iter().enumerate() {
            let (m, e) = o.mspe[gi];
            let lr = (e / m).ln();
            logs.push(lr);
            sum_m += m;
            sum_e += e;
            rows.push(ResultRow {
                experiment: kind,
                grid_sigma_bar2: sigma_bar2,
                replicate: Some(r),
                m: None,
                mspe_merge: Some(m),
                mspe_ens: Some(e),
                log_ratio: Some(lr),
                cmse_merge: None,
                cmse_ens: None,
                tau,
                tau1,
                tau2,
            });
        }
        let mean = logs.iter().sum::<f64>() / logs.len() as f64;
        let (lo, hi) = bootstrap_mean_interval(&logs, cfg.bootstrap_resamples, spec.seed, gi as u64);
        means.push(mean);
        let n = cfg.replicates as f64;
        summary.push(SummaryRow {
            experiment: kind,
            grid_sigma_bar2: sigma_bar2,
            m: None,
            replicates: cfg.replicates,
            mean_log_ratio: Some(mean),
            ci_lower: Some(lo),
            ci_upper: Some(hi),
            mean_mspe_merge: Some(sum_m / n),
            mean_mspe_ens: Some(sum_e / n),
            cmse_merge: None,
            cmse_ens: None,
            dropped: 0,
            tau,
            tau1,
            tau2,
        });
    }
    Ok(ExperimentResult {
        kind,
        seed: spec.seed,
        rows,
        summary,
        crossing: crossing_bracket(&cfg.grid, &means),
        dropped_truncations: 0,
        overlay,
    })
}
