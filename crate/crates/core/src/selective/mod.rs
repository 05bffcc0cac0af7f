//! Post-selection inference for component-wise boosting.

pub mod fourier_motzkin;
pub mod lemma;
pub mod truncnorm;

pub use fourier_motzkin::{fourier_motzkin_eliminate, truncation_region_sequence, CoordinateBounds, Polyhedron};
pub use lemma::{
    combine_ensemble, conditional_moments, conditional_mse_ensemble, conditional_mse_merged, limits_for_contrast,
    truncation_limits, ConditionalMoments, ConditionalMse, GaussianModel, TruncationLimits,
};
pub use truncnorm::{truncnorm_moments, TruncatedNormalParams};
