use std::path::Path;

use msboost::dataset::BasisSpec;
use msboost::sim::generator::MeanFunction;
use msboost::sim::{
    export_results, run_conditional_mse_curve, run_transition_sweep, CmseConfig, ExperimentKind, GeneratorSpec,
    HarnessStopping, PredictorSource, SweepConfig, SweepLearner, VarianceShape,
};

use crate::config::{Experiment, Learner, LoadedConfig, SweepStopping};
use crate::error::{CliError, CliResult};

fn config_error(e: msboost::Error) -> CliError {
    CliError::Config(e.to_string())
}

/// Generator settings from the `[design]` table, or the default design.
pub fn generator_spec(cfg: &LoadedConfig) -> CliResult<GeneratorSpec> {
    let design = cfg.config.design.clone().unwrap_or_default();
    let mut spec = GeneratorSpec::default_design(cfg.config.seed);
    spec.k_train = design.k_train;
    spec.v_test = design.v_test;
    spec.n_per_study = design.n_per_study;
    spec.sigma_eps2 = design.sigma_eps2;
    spec.random_effect_predictors = design.random_effect_predictors;
    spec.g_diag = vec![0.0; spec.random_effect_predictors.len()];
    match (design.basis, design.coefficients) {
        (Some(terms), Some(coefficients)) => {
            let basis = BasisSpec::new(terms).map_err(config_error)?;
            spec.mean_function = MeanFunction::new(basis, coefficients).map_err(config_error)?;
        }
        (None, None) => {}
        _ => {
            return Err(CliError::Config(
                "design.basis and design.coefficients must be given together".into(),
            ))
        }
    }
    if let Some(path) = design.predictor_csv {
        spec.predictor_source = PredictorSource::FromCsv {
            path: cfg.resolve(&path),
        };
    }
    spec.validate().map_err(config_error)?;
    Ok(spec)
}

pub fn run(cfg: &LoadedConfig, out: &Path) -> CliResult<()> {
    let sim = cfg
        .config
        .simulate
        .as_ref()
        .ok_or_else(|| CliError::Config("simulate needs a [simulate] table".into()))?;
    let generator = generator_spec(cfg)?;
    let result = match sim.experiment {
        Experiment::TransitionSweep => {
            let mut sweep = SweepConfig::new(generator, sim.grid.clone(), sim.replicates);
            sweep.learner = match sim.learner {
                Learner::Ridge => SweepLearner::Ridge {
                    lambda_grid: sim.lambda_grid.clone(),
                },
                Learner::Componentwise => SweepLearner::Componentwise,
            };
            sweep.eta = sim.eta;
            sweep.stopping = match sim.stopping {
                SweepStopping::Tuned => HarnessStopping::Tuned { m_upp: sim.m_upp },
                SweepStopping::PerFit => HarnessStopping::PerFit { m_upp: sim.m_upp },
                SweepStopping::Fixed => HarnessStopping::Fixed {
                    m: sim
                        .m
                        .ok_or_else(|| CliError::Config("simulate.stopping = \"fixed\" requires simulate.m".into()))?,
                },
            };
            if let Some(shape) = &sim.variance_shape {
                sweep.variance = VarianceShape::Proportional { shape: shape.clone() };
            }
            sweep.bootstrap_resamples = sim.bootstrap_resamples;
            sweep.validate().map_err(config_error)?;
            run_transition_sweep(&sweep)?
        }
        Experiment::CmseCurve => {
            let mut curve = CmseConfig::new(generator, sim.sigma_bar2_values.clone(), sim.replicates);
            curve.m_max = sim.m_max;
            curve.eta = sim.eta;
            curve.target_column = sim.target_column;
            curve.target_beta = sim.target_beta;
            curve.validate().map_err(config_error)?;
            run_conditional_mse_curve(&curve)?
        }
    };
    let path = out.join(format!("{}.csv", result.kind.as_str()));
    let paths = export_results(&result, &path, &cfg.hash)?;
    println!("results  : {}", paths.results.display());
    println!("summary  : {}", paths.summary.display());
    println!("manifest : {}", paths.manifest.display());
    if result.kind == ExperimentKind::TransitionSweep {
        match result.crossing {
            Some((lo, hi)) => println!("empirical crossing between sigma_bar2 = {lo} and {hi}"),
            None => println!("no empirical crossing on the grid"),
        }
    }
    if let (Some(terms), None) = (&result.overlay, &sim.variance_shape) {
        match terms.transition_point() {
            Some(tau) => println!("analytic transition point tau = {tau:.6e}"),
            None => println!("analytic transition point undefined"),
        }
    }
    if result.dropped_truncations > 0 {
        eprintln!(
            "warning: {} unit-iterations had degenerate truncation intervals and were dropped",
            result.dropped_truncations
        );
    }
    Ok(())
}
