//! Simulation harness: mixed-effects data generation, the merge-versus-
//! ensemble sweep over heterogeneity, conditional-MSE curves for
//! component-wise boosting, and CSV export.

pub mod cmse_curve;
pub mod export;
pub mod generator;
pub mod result;
pub mod seed;
pub mod sweep;

pub use cmse_curve::{is_degenerate, run_conditional_mse_curve, CmseConfig, TargetPath};
pub use export::{export_results, read_manifest, read_results, read_summary, ExportPaths, RESULT_COLUMNS};
pub use generator::{generate, GeneratedData, GeneratorSpec, MeanFunction, PredictorSource};
pub use result::{ExperimentKind, ExperimentResult, ResultRow, SummaryRow};
pub use sweep::{run_transition_sweep, HarnessStopping, SweepConfig, SweepLearner, VarianceShape};
