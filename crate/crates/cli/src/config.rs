//! TOML run configuration.
//!
//! Every table rejects unknown keys. Relative paths are resolved against
//! the directory holding the config file. Column indices are zero-based;
//! `random_effect_columns` and `target_column` index expanded basis columns,
//! `random_effect_predictors` indexes raw predictors.

use std::path::{Path, PathBuf};

use msboost::dataset::BasisTerm;
use msboost::linear_boost::{DEFAULT_ETA, DEFAULT_M_UPP};
use msboost::sim::cmse_curve::{DEFAULT_M_MAX, DEFAULT_TARGET_BETA, DEFAULT_TARGET_COLUMN};
use msboost::sim::generator::DEFAULT_RANDOM_EFFECT_PREDICTORS;
use msboost::sim::sweep::{DEFAULT_BOOTSTRAP_RESAMPLES, DEFAULT_LAMBDA_GRID};
use serde::Deserialize;

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    /// Overridden by `--out`.
    pub output_dir: Option<PathBuf>,
    pub simulate: Option<SimulateSection>,
    pub design: Option<DesignSection>,
    pub data: Option<DataSection>,
    pub model: Option<ModelSection>,
    pub variance: Option<VarianceSection>,
    pub cmse: Option<CmseSection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    TransitionSweep,
    CmseCurve,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Learner {
    #[default]
    Ridge,
    Componentwise,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepStopping {
    #[default]
    Tuned,
    PerFit,
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStopping {
    #[default]
    Aicc,
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Merged,
    Ensemble,
    #[default]
    Both,
}

/// Source of the mean vector f used for bias terms and conditional means.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanSource {
    /// Least-squares fit of y on [1, basis] over the stacked training rows.
    #[default]
    MergedFit,
    /// f = 0; bias terms vanish.
    Zero,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub experiment: Experiment,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    /// σ̄² grid of the transition sweep.
    #[serde(default = "default_grid")]
    pub grid: Vec<f64>,
    /// σ̄² values of the conditional-MSE curve.
    #[serde(default = "default_cmse_values")]
    pub sigma_bar2_values: Vec<f64>,
    #[serde(default)]
    pub learner: Learner,
    #[serde(default = "default_lambda_grid")]
    pub lambda_grid: Vec<f64>,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default)]
    pub stopping: SweepStopping,
    #[serde(default = "default_m_upp")]
    pub m_upp: usize,
    /// Iteration count when `stopping = "fixed"`.
    pub m: Option<usize>,
    /// Diagonal of G up to scale; equal variances when absent.
    pub variance_shape: Option<Vec<f64>>,
    #[serde(default = "default_bootstrap")]
    pub bootstrap_resamples: usize,
    #[serde(default = "default_m_max")]
    pub m_max: usize,
    #[serde(default = "default_target_column")]
    pub target_column: usize,
    #[serde(default = "default_target_beta")]
    pub target_beta: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSection {
    #[serde(default = "default_studies")]
    pub k_train: usize,
    #[serde(default = "default_studies")]
    pub v_test: usize,
    #[serde(default = "default_n")]
    pub n_per_study: usize,
    #[serde(default = "default_sigma_eps2")]
    pub sigma_eps2: f64,
    #[serde(default = "default_re_predictors")]
    pub random_effect_predictors: Vec<usize>,
    /// Basis and coefficients of the mean function; both or neither.
    pub basis: Option<Vec<BasisTerm>>,
    pub coefficients: Option<Vec<f64>>,
    /// Pool of predictor rows sampled without replacement.
    pub predictor_csv: Option<PathBuf>,
}

impl Default for DesignSection {
    fn default() -> Self {
        Self {
            k_train: default_studies(),
            v_test: default_studies(),
            n_per_study: default_n(),
            sigma_eps2: default_sigma_eps2(),
            random_effect_predictors: default_re_predictors(),
            basis: None,
            coefficients: None,
            predictor_csv: None,
        }
    }
}

/// One long file with a study column, or one file per study.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum DataFiles {
    Long(PathBuf),
    PerStudy(Vec<PathBuf>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub train: DataFiles,
    pub test: Option<DataFiles>,
    pub outcome: String,
    #[serde(default = "default_study_column")]
    pub study_column: String,
    /// Predictor columns in order; every other column when absent.
    pub predictors: Option<Vec<String>>,
    /// One term per predictor; all linear when absent.
    pub basis: Option<Vec<BasisTerm>>,
    #[serde(default)]
    pub random_effect_columns: Vec<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// Ridge unless set; `cmse` requires component-wise.
    pub learner: Option<Learner>,
    #[serde(default)]
    pub strategy: Strategy,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default)]
    pub stopping: FitStopping,
    #[serde(default = "default_m_upp")]
    pub m_upp: usize,
    pub m: Option<usize>,
    /// Ensemble weights; equal when absent.
    pub weights: Option<Vec<f64>>,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            learner: None,
            strategy: Strategy::default(),
            lambda: default_lambda(),
            eta: default_eta(),
            stopping: FitStopping::default(),
            m_upp: default_m_upp(),
            m: None,
            weights: None,
        }
    }
}

impl ModelSection {
    pub fn learner(&self) -> Learner {
        self.learner.unwrap_or_default()
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VarianceSection {
    /// Diagonal of G, one entry per random-effect column.
    pub g_diag: Vec<f64>,
    pub sigma_eps2: f64,
    /// Heterogeneity compared against the transition point; tr(G)/P when
    /// absent.
    pub sigma_bar2: Option<f64>,
    #[serde(default)]
    pub mean: MeanSource,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CmseSection {
    pub target_column: usize,
    pub target_beta: f64,
    /// Curve length; the model's stopping rule on the merged data when absent.
    pub m_max: Option<usize>,
}

fn default_replicates() -> usize {
    100
}
fn default_grid() -> Vec<f64> {
    vec![0.0, 0.01, 0.02, 0.03, 0.05, 0.1, 0.2, 0.4]
}
fn default_cmse_values() -> Vec<f64> {
    vec![0.01, 0.05]
}
fn default_lambda_grid() -> Vec<f64> {
    DEFAULT_LAMBDA_GRID.to_vec()
}
fn default_eta() -> f64 {
    DEFAULT_ETA
}
fn default_m_upp() -> usize {
    DEFAULT_M_UPP
}
fn default_bootstrap() -> usize {
    DEFAULT_BOOTSTRAP_RESAMPLES
}
fn default_m_max() -> usize {
    DEFAULT_M_MAX
}
fn default_target_column() -> usize {
    DEFAULT_TARGET_COLUMN
}
fn default_target_beta() -> f64 {
    DEFAULT_TARGET_BETA
}
fn default_studies() -> usize {
    4
}
fn default_n() -> usize {
    100
}
fn default_sigma_eps2() -> f64 {
    1.0
}
fn default_re_predictors() -> Vec<usize> {
    DEFAULT_RANDOM_EFFECT_PREDICTORS.to_vec()
}
fn default_study_column() -> String {
    "study_id".to_string()
}
fn default_lambda() -> f64 {
    1.0
}

/// A parsed config with the raw bytes it came from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    /// Hex SHA-256 of the config file.
    pub hash: String,
    pub base_dir: PathBuf,
}

impl LoadedConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read '{}': {e}", path.display())))?;
        let config = parse(&text)?;
        let base_dir = path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .map_or_else(|| PathBuf::from("."), Path::to_path_buf);
        Ok(Self {
            config,
            hash: sha256_hex(text.as_bytes()),
            base_dir,
        })
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }
}

/// Parses and version-checks a config.
pub fn parse(text: &str) -> Result<RunConfig, CliError> {
    let config: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
    if config.schema_version != SCHEMA_VERSION {
        return Err(CliError::Config(format!(
            "schema_version {} is not supported (expected {SCHEMA_VERSION})",
            config.schema_version
        )));
    }
    Ok(config)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
