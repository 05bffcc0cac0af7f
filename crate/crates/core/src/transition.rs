//! Analytic prediction error of merged and ensemble ridge boosting, and the
//! heterogeneity level at which ensembling starts to win.
//!
//! Both estimators are linear in the training outcomes, so test predictions
//! are Ŷ₀ = L y for the merged learner and Ŷ₀ = Σ w_k L_k y_k for the
//! ensemble. With the usual coefficient form L = X̃₀R̃; the maps may also
//! carry an intercept. Training outcomes follow
//! y_k = f_k + Z_k γ_k + ε_k with γ_k ~ N(0, G), G = diag(g), ε_k ~ N(0, σε² I).
//!
//! Every error term is affine in g, so the module reduces the inputs once to
//! per-random-effect trace coefficients and evaluates everything from those.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linear_boost::validate_weights;

/// Relative tolerance for grouping equal random-effect variances.
const GROUP_TOL: f64 = 1e-12;

/// Linear prediction maps and the data model they are evaluated under.
#[derive(Debug, Clone)]
pub struct TransitionInputs {
    /// n_test × N map from stacked training outcomes to test predictions.
    pub l_merge: DMatrix<f64>,
    /// n_test × n_k maps from each study's outcomes to its test predictions.
    pub l_study: Vec<DMatrix<f64>>,
    /// n_k × Q random-effect designs of the training studies.
    pub z_train: Vec<DMatrix<f64>>,
    /// Random-effect designs of the test studies (irreducible error only).
    pub z_test: Vec<DMatrix<f64>>,
    /// Mean function at each training study's rows.
    pub f_train: Vec<DVector<f64>>,
    /// Mean function at the stacked test rows.
    pub f_test: DVector<f64>,
    pub weights: Vec<f64>,
    pub sigma_eps2: f64,
    /// Diagonal of G (length Q).
    pub g_diag: DVector<f64>,
    /// Number of fixed-effect columns P, used in σ̄² = tr(G)/P.
    pub p: usize,
}

impl TransitionInputs {
    /// Builds the maps from coefficient operators: L = X̃₀R̃ and L_k = X̃₀R̃_k.
    #[allow(clippy::too_many_arguments)]
    pub fn from_operators(
        r_merge: &DMatrix<f64>,
        r_study: &[DMatrix<f64>],
        xt0: &DMatrix<f64>,
        z_train: Vec<DMatrix<f64>>,
        z_test: Vec<DMatrix<f64>>,
        f_train: Vec<DVector<f64>>,
        f_test: DVector<f64>,
        weights: Vec<f64>,
        sigma_eps2: f64,
        g_diag: DVector<f64>,
    ) -> Result<Self> {
        if r_merge.nrows() != xt0.ncols() || r_study.iter().any(|r| r.nrows() != xt0.ncols()) {
            return Err(Error::DimensionMismatch(
                "coefficient operators and test design disagree on P".into(),
            ));
        }
        let inputs = Self {
            l_merge: xt0 * r_merge,
            l_study: r_study.iter().map(|r| xt0 * r).collect(),
            z_train,
            z_test,
            f_train,
            f_test,
            weights,
            sigma_eps2,
            g_diag,
            p: xt0.ncols(),
        };
        inputs.validate()?;
        Ok(inputs)
    }

    pub fn k(&self) -> usize {
        self.l_study.len()
    }

    pub fn q(&self) -> usize {
        self.g_diag.len()
    }

    pub fn n_test(&self) -> usize {
        self.f_test.len()
    }

    /// σ̄² = tr(G)/P.
    pub fn sigma_bar2(&self) -> f64 {
        self.g_diag.sum() / self.p as f64
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.k();
        validate_weights(&self.weights, k)?;
        if self.z_train.len() != k || self.f_train.len() != k {
            return Err(Error::DimensionMismatch(format!(
                "expected {k} training Z blocks and mean vectors"
            )));
        }
        if self.p == 0 {
            return Err(Error::InvalidInput("P must be positive".into()));
        }
        if !(self.sigma_eps2 >= 0.0) || self.g_diag.iter().any(|g| !(*g >= 0.0)) {
            return Err(Error::InvalidInput("variance components must be nonnegative".into()));
        }
        let n_test = self.n_test();
        let q = self.q();
        let mut n_total = 0;
        for ((l, z), f) in self.l_study.iter().zip(&self.z_train).zip(&self.f_train) {
            let nk = z.nrows();
            if l.nrows() != n_test || l.ncols() != nk || f.len() != nk || z.ncols() != q {
                return Err(Error::DimensionMismatch(
                    "study map, Z block and mean vector sizes disagree".into(),
                ));
            }
            n_total += nk;
        }
        if self.l_merge.nrows() != n_test || self.l_merge.ncols() != n_total {
            return Err(Error::DimensionMismatch(format!(
                "merged map is {}x{}, expected {n_test}x{n_total}",
                self.l_merge.nrows(),
                self.l_merge.ncols()
            )));
        }
        let test_rows: usize = self.z_test.iter().map(|z| z.nrows()).sum();
        if !self.z_test.is_empty() && (test_rows != n_test || self.z_test.iter().any(|z| z.ncols() != q)) {
            return Err(Error::DimensionMismatch(
                "test Z blocks do not cover the test rows".into(),
            ));
        }
        Ok(())
    }
}

/// The pieces of an analytic MSPE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MspeComponents {
    /// Between-study term tr(G Zᵀ Lᵀ L Z).
    pub between: f64,
    /// Within-study term σε² tr(Lᵀ L).
    pub within: f64,
    /// Squared bias ‖E Ŷ₀ − f₀‖².
    pub bias2: f64,
    /// E‖Y₀ − f₀‖² = Σ tr(Z₀ G Z₀ᵀ) + n_test σε².
    pub irreducible: f64,
}

impl MspeComponents {
    pub fn total(&self) -> f64 {
        self.between + self.within + self.bias2 + self.irreducible
    }

    /// E‖Ŷ₀ − f₀‖², the part that depends on the estimator.
    pub fn reducible(&self) -> f64 {
        self.between + self.within + self.bias2
    }
}

/// Inputs reduced to coefficients of g.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionTerms {
    /// Σ_k (Z_kᵀ L_{·k}ᵀ L_{·k} Z_k)_qq for the merged map.
    pub merge_diag: DVector<f64>,
    /// Σ_k w_k² (Z_kᵀ L_kᵀ L_k Z_k)_qq.
    pub ens_diag: DVector<f64>,
    /// tr(Lᵀ L).
    pub merge_trace: f64,
    /// Σ_k w_k² tr(L_kᵀ L_k).
    pub ens_trace: f64,
    pub bias2_merge: f64,
    pub bias2_ens: f64,
    /// Σ_v (Z₀ᵀ Z₀)_qq over the test studies.
    pub test_diag: DVector<f64>,
    pub n_test: usize,
    pub sigma_eps2: f64,
    pub p: usize,
}

impl TransitionTerms {
    pub fn new(inputs: &TransitionInputs) -> Result<Self> {
        inputs.validate()?;
        let q = inputs.q();
        let mut merge_diag = DVector::zeros(q);
        let mut ens_diag = DVector::zeros(q);
        let mut ens_trace = 0.0;
        let mut ens_mean = DVector::zeros(inputs.n_test());
        let mut merge_mean = DVector::zeros(inputs.n_test());
        let mut offset = 0;
        for (((l_k, z_k), f_k), w) in inputs
            .l_study
            .iter()
            .zip(&inputs.z_train)
            .zip(&inputs.f_train)
            .zip(&inputs.weights)
        {
            let nk = z_k.nrows();
            let block = inputs.l_merge.columns(offset, nk);
            let lz_merge = block * z_k;
            let lz_ens = l_k * z_k;
            for qi in 0..q {
                merge_diag[qi] += lz_merge.column(qi).norm_squared();
                ens_diag[qi] += w * w * lz_ens.column(qi).norm_squared();
            }
            ens_trace += w * w * l_k.norm_squared();
            merge_mean += block * f_k;
            ens_mean += l_k * f_k * *w;
            offset += nk;
        }
        let mut test_diag = DVector::zeros(q);
        for z in &inputs.z_test {
            for qi in 0..q {
                test_diag[qi] += z.column(qi).norm_squared();
            }
        }
        Ok(Self {
            merge_diag,
            ens_diag,
            merge_trace: inputs.l_merge.norm_squared(),
            ens_trace,
            bias2_merge: (merge_mean - &inputs.f_test).norm_squared(),
            bias2_ens: (ens_mean - &inputs.f_test).norm_squared(),
            test_diag,
            n_test: inputs.n_test(),
            sigma_eps2: inputs.sigma_eps2,
            p: inputs.p,
        })
    }

    pub fn q(&self) -> usize {
        self.merge_diag.len()
    }

    /// Entrywise mean of several term sets over the same design sizes; the
    /// error of the averaged terms is the average error.
    pub fn mean(terms: &[TransitionTerms]) -> Result<TransitionTerms> {
        let first = terms
            .first()
            .ok_or_else(|| Error::InvalidInput("no transition terms to average".into()))?;
        if terms.iter().any(|t| t.q() != first.q() || t.p != first.p) {
            return Err(Error::DimensionMismatch("term sets disagree on Q or P".into()));
        }
        let n = terms.len() as f64;
        let avg = |f: &dyn Fn(&TransitionTerms) -> f64| terms.iter().map(f).sum::<f64>() / n;
        let avg_vec = |f: &dyn Fn(&TransitionTerms) -> &DVector<f64>| {
            terms.iter().fold(DVector::zeros(first.q()), |acc, t| acc + f(t)) / n
        };
        Ok(TransitionTerms {
            merge_diag: avg_vec(&|t| &t.merge_diag),
            ens_diag: avg_vec(&|t| &t.ens_diag),
            merge_trace: avg(&|t| t.merge_trace),
            ens_trace: avg(&|t| t.ens_trace),
            bias2_merge: avg(&|t| t.bias2_merge),
            bias2_ens: avg(&|t| t.bias2_ens),
            test_diag: avg_vec(&|t| &t.test_diag),
            n_test: first.n_test,
            sigma_eps2: avg(&|t| t.sigma_eps2),
            p: first.p,
        })
    }

    fn irreducible(&self, g: &DVector<f64>) -> f64 {
        self.test_diag.dot(g) + self.n_test as f64 * self.sigma_eps2
    }

    pub fn mspe_merged(&self, g: &DVector<f64>) -> MspeComponents {
        MspeComponents {
            between: self.merge_diag.dot(g),
            within: self.sigma_eps2 * self.merge_trace,
            bias2: self.bias2_merge,
            irreducible: self.irreducible(g),
        }
    }

    pub fn mspe_ensemble(&self, g: &DVector<f64>) -> MspeComponents {
        MspeComponents {
            between: self.ens_diag.dot(g),
            within: self.sigma_eps2 * self.ens_trace,
            bias2: self.bias2_ens,
            irreducible: self.irreducible(g),
        }
    }

    /// tr(Z′ᵀ Lᵀ L Z′) − Σ w_k² tr(Z_kᵀ L_kᵀ L_k Z_k).
    pub fn condition_value(&self) -> f64 {
        self.merge_diag.sum() - self.ens_diag.sum()
    }

    /// Within-study and bias advantage of merging:
    /// σε²(Σ w_k² tr(L_kᵀL_k) − tr(LᵀL)) + ‖b_Ens‖² − ‖b_Merge‖².
    pub fn numerator(&self) -> f64 {
        self.sigma_eps2 * (self.ens_trace - self.merge_trace) + self.bias2_ens - self.bias2_merge
    }

    /// τ under equal random-effect variances, `None` unless the condition
    /// value is positive.
    pub fn transition_point(&self) -> Option<f64> {
        let cond = self.condition_value();
        if cond > 0.0 {
            Some(self.q() as f64 / self.p as f64 * self.numerator() / cond)
        } else {
            None
        }
    }

    /// a_d/J_d for each distinct variance group of `g`.
    pub fn group_slopes(&self, g: &DVector<f64>) -> Vec<VarianceGroup> {
        let mut groups: Vec<VarianceGroup> = Vec::new();
        for (qi, &gq) in g.iter().enumerate() {
            let a = self.merge_diag[qi] - self.ens_diag[qi];
            let tol = GROUP_TOL * gq.abs().max(1e-300);
            match groups
                .iter_mut()
                .find(|grp| (grp.variance - gq).abs() <= tol.max(GROUP_TOL * grp.variance.abs()))
            {
                Some(grp) => {
                    grp.a += a;
                    grp.members += 1;
                }
                None => groups.push(VarianceGroup {
                    variance: gq,
                    a,
                    members: 1,
                }),
            }
        }
        groups
    }

    /// [τ1, τ2] for the variance pattern of `g`.
    ///
    /// τ1 = c/(P max_d a_d/J_d) is defined when the maximum is positive and
    /// τ2 = c/(P min_d a_d/J_d) when the minimum is positive, with c the
    /// numerator of τ. If c < 0 the two values are reported in increasing
    /// order.
    pub fn transition_interval(&self, g: &DVector<f64>) -> (Option<f64>, Option<f64>) {
        let groups = self.group_slopes(g);
        if groups.is_empty() {
            return (None, None);
        }
        let slopes: Vec<f64> = groups.iter().map(|grp| grp.a / grp.members as f64).collect();
        let max = slopes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = slopes.iter().copied().fold(f64::INFINITY, f64::min);
        let c = self.numerator();
        let p = self.p as f64;
        let t_max = (max > 0.0).then(|| c / (p * max));
        let t_min = (min > 0.0).then(|| c / (p * min));
        if c < 0.0 {
            match (t_max, t_min) {
                (Some(a), Some(b)) => (Some(a.min(b)), Some(a.max(b))),
                other => other,
            }
        } else {
            (t_max, t_min)
        }
    }

    /// Σ w_k² tr(Z_kᵀ L_kᵀ L_k Z_k) / tr(Z′ᵀ Lᵀ L Z′).
    pub fn asymptote(&self) -> Result<f64> {
        let denom = self.merge_diag.sum();
        if denom == 0.0 {
            return Err(Error::ZeroAsymptoteDenominator);
        }
        Ok(self.ens_diag.sum() / denom)
    }

    /// Report at the variance pattern `g` and heterogeneity estimate σ̄².
    pub fn report(&self, g: &DVector<f64>, sigma_bar2: f64) -> TransitionReport {
        let equal = is_equal_variance(g);
        let tau = self.transition_point();
        let (tau1, tau2) = if equal { (tau, tau) } else { self.transition_interval(g) };
        let recommendation = match (tau1, tau2) {
            (Some(t1), _) if sigma_bar2 < t1 => Recommendation::Merge,
            (_, Some(t2)) if sigma_bar2 > t2 => Recommendation::Ensemble,
            _ => Recommendation::Indeterminate,
        };
        TransitionReport {
            tau: if equal { tau } else { None },
            tau1: if equal { None } else { tau1 },
            tau2: if equal { None } else { tau2 },
            condition_value: self.condition_value(),
            sigma_bar2,
            mspe_merge: self.mspe_merged(g).total(),
            mspe_ens: self.mspe_ensemble(g).total(),
            asymptote: self.asymptote().ok(),
            recommendation,
            equal_variance: equal,
        }
    }
}

/// One distinct random-effect variance and its trace coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceGroup {
    pub variance: f64,
    /// a_d = Σ over members of (merged − ensemble) trace coefficients.
    pub a: f64,
    /// J_d.
    pub members: usize,
}

/// Whether every entry of g equals the first within a relative 1e-12.
pub fn is_equal_variance(g: &DVector<f64>) -> bool {
    match g.iter().next() {
        None => true,
        Some(&g0) => g
            .iter()
            .all(|&gq| (gq - g0).abs() <= GROUP_TOL * g0.abs().max(gq.abs())),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Recommendation {
    Merge,
    Ensemble,
    Indeterminate,
}

impl std::fmt::Display for Recommendation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Recommendation::Merge => "merge",
            Recommendation::Ensemble => "ensemble",
            Recommendation::Indeterminate => "indeterminate",
        })
    }
}

/// Transition summary for one dataset collection.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransitionReport {
    /// Equal-variance transition point.
    pub tau: Option<f64>,
    pub tau1: Option<f64>,
    pub tau2: Option<f64>,
    pub condition_value: f64,
    pub sigma_bar2: f64,
    pub mspe_merge: f64,
    pub mspe_ens: f64,
    pub asymptote: Option<f64>,
    pub recommendation: Recommendation,
    pub equal_variance: bool,
}

impl std::fmt::Display for TransitionReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let opt = |v: Option<f64>| v.map_or_else(|| "undefined".to_string(), |x| format!("{x:.6e}"));
        writeln!(f, "heterogeneity sigma_bar2 : {:.6e}", self.sigma_bar2)?;
        if self.equal_variance {
            writeln!(f, "transition point tau     : {}", opt(self.tau))?;
        } else {
            writeln!(f, "transition interval      : [{}, {}]", opt(self.tau1), opt(self.tau2))?;
        }
        writeln!(f, "condition value          : {:.6e}", self.condition_value)?;
        writeln!(f, "analytic MSPE (merged)   : {:.6e}", self.mspe_merge)?;
        writeln!(f, "analytic MSPE (ensemble) : {:.6e}", self.mspe_ens)?;
        writeln!(f, "MSPE ratio asymptote     : {}", opt(self.asymptote))?;
        write!(f, "recommendation           : {}", self.recommendation)
    }
}

/// Analytic MSPE of the merged learner at the inputs' G.
pub fn analytic_mspe_merged(inputs: &TransitionInputs) -> Result<MspeComponents> {
    Ok(TransitionTerms::new(inputs)?.mspe_merged(&inputs.g_diag))
}

/// Analytic MSPE of the ensemble at the inputs' G.
pub fn analytic_mspe_ensemble(inputs: &TransitionInputs) -> Result<MspeComponents> {
    Ok(TransitionTerms::new(inputs)?.mspe_ensemble(&inputs.g_diag))
}

/// Equal-variance transition point with its condition value.
pub fn transition_point(inputs: &TransitionInputs) -> Result<(Option<f64>, f64)> {
    let terms = TransitionTerms::new(inputs)?;
    Ok((terms.transition_point(), terms.condition_value()))
}

/// Transition interval for the variance pattern of the inputs' G.
pub fn transition_interval(inputs: &TransitionInputs) -> Result<(Option<f64>, Option<f64>)> {
    Ok(TransitionTerms::new(inputs)?.transition_interval(&inputs.g_diag))
}

pub fn mspe_asymptote(inputs: &TransitionInputs) -> Result<f64> {
    TransitionTerms::new(inputs)?.asymptote()
}

/// Report with the inputs' G as variance pattern and a heterogeneity estimate.
pub fn recommend(inputs: &TransitionInputs, sigma_bar2_estimate: f64) -> Result<TransitionReport> {
    Ok(TransitionTerms::new(inputs)?.report(&inputs.g_diag, sigma_bar2_estimate))
}

/// G with every entry chosen so that tr(G)/P = σ̄².
pub fn equal_variance_g(sigma_bar2: f64, q: usize, p: usize) -> DVector<f64> {
    DVector::from_element(q, sigma_bar2 * p as f64 / q as f64)
}

/// `shape` rescaled so that tr(G)/P = σ̄².
pub fn scaled_g(shape: &DVector<f64>, sigma_bar2: f64, p: usize) -> DVector<f64> {
    let total = shape.sum();
    if total == 0.0 {
        return DVector::zeros(shape.len());
    }
    shape * (sigma_bar2 * p as f64 / total)
}
