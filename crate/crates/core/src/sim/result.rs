//! Experiment records shared by the sweep and the conditional-MSE curves.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::seed::{rng_for, BOOTSTRAP_STREAM};
use crate::transition::TransitionTerms;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    TransitionSweep,
    CmseCurve,
}

impl ExperimentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::TransitionSweep => "transition_sweep",
            ExperimentKind::CmseCurve => "cmse_curve",
        }
    }
}

/// One line of the results CSV; unused cells are empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: ExperimentKind,
    pub grid_sigma_bar2: f64,
    pub replicate: Option<usize>,
    pub m: Option<usize>,
    pub mspe_merge: Option<f64>,
    pub mspe_ens: Option<f64>,
    /// ln(MSPE_ens / MSPE_merge); positive when merging predicts better.
    pub log_ratio: Option<f64>,
    pub cmse_merge: Option<f64>,
    pub cmse_ens: Option<f64>,
    pub tau: Option<f64>,
    pub tau1: Option<f64>,
    pub tau2: Option<f64>,
}

/// One line of the summary CSV: a grid point, or a (grid point, m) pair for
/// the conditional-MSE curves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub experiment: ExperimentKind,
    pub grid_sigma_bar2: f64,
    pub m: Option<usize>,
    pub replicates: usize,
    pub mean_log_ratio: Option<f64>,
    pub ci_lower: Option<f64>,
    pub ci_upper: Option<f64>,
    pub mean_mspe_merge: Option<f64>,
    pub mean_mspe_ens: Option<f64>,
    pub cmse_merge: Option<f64>,
    pub cmse_ens: Option<f64>,
    /// Replicates dropped for a degenerate truncation interval.
    pub dropped: usize,
    pub tau: Option<f64>,
    pub tau1: Option<f64>,
    pub tau2: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub kind: ExperimentKind,
    pub seed: u64,
    pub rows: Vec<ResultRow>,
    pub summary: Vec<SummaryRow>,
    /// Adjacent grid values between which the mean log ratio turns from
    /// positive to nonpositive.
    pub crossing: Option<(f64, f64)>,
    pub dropped_truncations: usize,
    /// Transition terms averaged over replicates (ridge sweeps only).
    pub overlay: Option<TransitionTerms>,
}

/// Percentile bootstrap 95% interval for the mean, widened if needed so it
/// contains the sample mean.
pub fn bootstrap_mean_interval(values: &[f64], resamples: usize, seed: u64, stream: u64) -> (f64, f64) {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 || resamples == 0 {
        return (mean, mean);
    }
    let mut rng = rng_for(seed, &[BOOTSTRAP_STREAM, stream]);
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| values[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let lo = quantile_sorted(&means, 0.025);
    let hi = quantile_sorted(&means, 0.975);
    (lo.min(mean), hi.max(mean))
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], prob: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * prob;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// First adjacent pair of grid points where the mean changes from
/// positive to nonpositive.
pub fn crossing_bracket(grid: &[f64], means: &[f64]) -> Option<(f64, f64)> {
    grid.windows(2)
        .zip(means.windows(2))
        .find(|(_, m)| m[0] > 0.0 && m[1] <= 0.0)
        .map(|(g, _)| (g[0], g[1]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crossing_found() {
        let grid = [0.0, 0.1, 0.2, 0.3];
        assert_eq!(crossing_bracket(&grid, &[0.3, 0.1, -0.2, -0.4]), Some((0.1, 0.2)));
        assert_eq!(crossing_bracket(&grid, &[0.3, 0.1, 0.05, 0.01]), None);
    }

    #[test]
    fn interval_contains_mean_and_is_deterministic() {
        let v: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin()).collect();
        let (lo, hi) = bootstrap_mean_interval(&v, 1000, 3, 0);
        let mean = v.iter().sum::<f64>() / 50.0;
        assert!(lo <= mean && mean <= hi);
        assert_eq!((lo, hi), bootstrap_mean_interval(&v, 1000, 3, 0));
    }

    #[test]
    fn quantiles_interpolate() {
        let s = [0.0, 1.0, 2.0, 3.0];
        assert_eq!(quantile_sorted(&s, 0.5), 1.5);
        assert_eq!(quantile_sorted(&s, 0.0), 0.0);
        assert_eq!(quantile_sorted(&s, 1.0), 3.0);
    }

    #[test]
    fn two_replicates_give_wide_interval() {
        let (lo, hi) = bootstrap_mean_interval(&[-1.0, 1.0], 1000, 1, 0);
        assert!(lo <= -0.9 && hi >= 0.9);
    }
}
