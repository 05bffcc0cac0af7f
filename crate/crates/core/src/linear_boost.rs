//! ℓ2 boosting with a full (ridge) linear learner.
//!
//! The learner is stored through the thin SVD X̃ = U S Vᵀ. With
//! d_i = s_i²/(s_i²+λ) the hat matrix is H = U diag(d) Uᵀ, so every power of
//! (I − ηH) is diagonal in the same basis. Iterative paths are still run by
//! the literal recursion; the spectral form is used for operators, traces and
//! AICc scans.

use log::debug;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::dataset::{DesignData, ExpandedDataset};
use crate::error::{Error, Result};

pub const DEFAULT_ETA: f64 = 0.5;
pub const DEFAULT_M_UPP: usize = 500;
/// Largest N for which N × N operators are materialized.
pub const DEFAULT_OPERATOR_CAP: usize = 2000;

/// Relative singular-value threshold below which λ = 0 is rejected.
const RANK_TOL: f64 = 1e-10;

/// Ridge learner B = (X̃ᵀX̃ + λI)⁻¹X̃ᵀ, H = X̃B.
#[derive(Debug, Clone)]
pub struct LinearLearner {
    xt: DMatrix<f64>,
    lambda: f64,
    b_op: DMatrix<f64>,
    /// N × r left singular vectors.
    u: DMatrix<f64>,
    /// Eigenvalues of H on the columns of `u`.
    d: DVector<f64>,
    /// P × r right singular vectors.
    v: DMatrix<f64>,
    /// s/(s² + λ), the spectral form of B.
    b_gain: DVector<f64>,
    operator_cap: usize,
}

/// Builds the ridge operators for a design.
pub fn ridge_operators(xt: &DMatrix<f64>, lambda: f64) -> Result<LinearLearner> {
    LinearLearner::new(xt, lambda)
}

impl LinearLearner {
    pub fn new(xt: &DMatrix<f64>, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "lambda must be finite and nonnegative, got {lambda}"
            )));
        }
        let (n, p) = xt.shape();
        if n == 0 || p == 0 {
            return Err(Error::InvalidInput("empty design".into()));
        }
        let svd = xt.clone().svd(true, true);
        let u = svd.u.expect("requested U");
        let v = svd.v_t.expect("requested Vᵀ").transpose();
        let s = svd.singular_values;
        if lambda == 0.0 {
            let smax = s.max();
            if p > n || s.iter().any(|&si| si <= RANK_TOL * smax.max(f64::MIN_POSITIVE)) {
                return Err(Error::RankDeficient);
            }
        }
        let d = s.map(|si| if si == 0.0 { 0.0 } else { si * si / (si * si + lambda) });
        let b_gain = s.map(|si| if si == 0.0 { 0.0 } else { si / (si * si + lambda) });
        let b_op = &v * DMatrix::from_diagonal(&b_gain) * u.transpose();
        Ok(Self {
            xt: xt.clone(),
            lambda,
            b_op,
            u,
            d,
            v,
            b_gain,
            operator_cap: DEFAULT_OPERATOR_CAP,
        })
    }

    pub fn with_operator_cap(mut self, cap: usize) -> Self {
        self.operator_cap = cap;
        self
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn xt(&self) -> &DMatrix<f64> {
        &self.xt
    }

    /// P × N coefficient operator B.
    pub fn b_op(&self) -> &DMatrix<f64> {
        &self.b_op
    }

    pub fn n(&self) -> usize {
        self.xt.nrows()
    }

    pub fn p(&self) -> usize {
        self.xt.ncols()
    }

    /// Eigenvalues of H on the range of X̃.
    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.d
    }

    fn check_cap(&self) -> Result<()> {
        if self.n() > self.operator_cap {
            return Err(Error::OperatorTooLarge {
                n: self.n(),
                cap: self.operator_cap,
            });
        }
        Ok(())
    }

    /// N × N hat matrix H.
    pub fn h_op(&self) -> Result<DMatrix<f64>> {
        self.spectral_operator(|d| d)
    }

    /// U diag(g(d)) Uᵀ.
    fn spectral_operator(&self, g: impl Fn(f64) -> f64) -> Result<DMatrix<f64>> {
        self.check_cap()?;
        let mut scaled = self.u.clone();
        for (mut col, &di) in scaled.column_iter_mut().zip(self.d.iter()) {
            col *= g(di);
        }
        Ok(scaled * self.u.transpose())
    }

    /// H r computed as X̃(Br).
    pub fn apply_h(&self, r: &DVector<f64>) -> DVector<f64> {
        &self.xt * (&self.b_op * r)
    }
}

/// Result of boosting with the ridge learner.
#[derive(Debug, Clone)]
pub struct BoostFit {
    pub coefficients: DVector<f64>,
    /// β̂ after iterations 1..=m_stop.
    pub coefficient_path: Vec<DVector<f64>>,
    /// Ŷ after iterations 1..=m_stop.
    pub fitted_path: Vec<DVector<f64>>,
    pub eta: f64,
    pub m_stop: usize,
    /// tr of the fitted map after iterations 1..=m_stop.
    pub df_path: Vec<f64>,
    /// AICc after iterations 1..=m_stop; `None` where df + 2 ≥ N.
    pub aicc_path: Vec<Option<f64>>,
}

fn check_eta(eta: f64) -> Result<()> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::InvalidInput(format!("eta must lie in (0, 1], got {eta}")));
    }
    Ok(())
}

/// Runs m iterations of ℓ2 boosting with the ridge learner.
pub fn boost_linear(y: &DVector<f64>, learner: &LinearLearner, eta: f64, m: usize) -> Result<BoostFit> {
    check_eta(eta)?;
    if m == 0 {
        return Err(Error::InvalidInput("number of iterations must be at least 1".into()));
    }
    if y.len() != learner.n() {
        return Err(Error::DimensionMismatch(format!(
            "y has {} entries, design has {} rows",
            y.len(),
            learner.n()
        )));
    }
    let mut beta = DVector::zeros(learner.p());
    let mut fitted = DVector::zeros(learner.n());
    let mut coefficient_path = Vec::with_capacity(m);
    let mut fitted_path = Vec::with_capacity(m);
    for _ in 0..m {
        let r = y - &fitted;
        let step = learner.b_op() * r;
        fitted += learner.xt() * &step * eta;
        beta += step * eta;
        coefficient_path.push(beta.clone());
        fitted_path.push(fitted.clone());
    }
    let n = learner.n() as f64;
    let df_path: Vec<f64> = (1..=m).map(|k| fitted_map_trace(learner, eta, k)).collect();
    let aicc_path = fitted_path
        .iter()
        .zip(&df_path)
        .map(|(f, &df)| aicc_value((y - f).norm_squared() / n, df, n))
        .collect();
    Ok(BoostFit {
        coefficients: beta,
        coefficient_path,
        fitted_path,
        eta,
        m_stop: m,
        df_path,
        aicc_path,
    })
}

/// I − (I − ηH)^{m+1}.
///
/// The fitted values after k iterations are `boosting_operator(k − 1)` y.
pub fn boosting_operator(learner: &LinearLearner, eta: f64, m: usize) -> Result<DMatrix<f64>> {
    check_eta(eta)?;
    let e = exponent(m + 1);
    learner.spectral_operator(|d| 1.0 - (1.0 - eta * d).powi(e))
}

/// Trace of I − (I − ηH)^k, the map to fitted values after k iterations.
pub fn fitted_map_trace(learner: &LinearLearner, eta: f64, k: usize) -> f64 {
    let e = exponent(k);
    learner.d.iter().map(|&d| 1.0 - (1.0 - eta * d).powi(e)).sum()
}

fn exponent(k: usize) -> i32 {
    i32::try_from(k).expect("iteration count fits in i32")
}

/// R̃ = Σ_{m'=1}^{m} ηB(I − ηH)^{m'−1}, so that β̂ after m iterations is R̃y.
pub fn compute_r(learner: &LinearLearner, eta: f64, m: usize) -> Result<DMatrix<f64>> {
    check_eta(eta)?;
    if m == 0 {
        return Err(Error::InvalidInput("number of iterations must be at least 1".into()));
    }
    let e = exponent(m);
    // Σ_{i<m} η(1−ηd)^i = (1 − (1−ηd)^m)/d for d > 0, and ηm for d = 0.
    let gains = learner.d.zip_map(&learner.b_gain, |d, g| {
        let q = 1.0 - eta * d;
        let geometric = if d == 0.0 {
            eta * m as f64
        } else {
            (1.0 - q.powi(e)) / d
        };
        g * geometric
    });
    Ok(&learner.v * DMatrix::from_diagonal(&gains) * learner.u.transpose())
}

/// AICc(m) = ln σ̂² + (1 + df/N)/(1 − (df + 2)/N), or `None` when df + 2 ≥ N.
pub fn aicc_value(sigma2: f64, df: f64, n: f64) -> Option<f64> {
    if df + 2.0 >= n {
        return None;
    }
    Some(sigma2.max(f64::MIN_POSITIVE).ln() + (1.0 + df / n) / (1.0 - (df + 2.0) / n))
}

/// Outcome of an AICc scan.
#[derive(Debug, Clone, PartialEq)]
pub struct AiccStop {
    pub m_stop: usize,
    /// AICc at m = 1..=m_upp.
    pub aicc_path: Vec<Option<f64>>,
    pub df_path: Vec<f64>,
}

/// Chooses the stopping iteration in 1..=m_upp minimizing AICc.
pub fn aicc_stop(y: &DVector<f64>, learner: &LinearLearner, eta: f64, m_upp: usize) -> Result<AiccStop> {
    check_eta(eta)?;
    if m_upp == 0 {
        return Err(Error::InvalidInput("m_upp must be at least 1".into()));
    }
    if y.len() != learner.n() {
        return Err(Error::DimensionMismatch(format!(
            "y has {} entries, design has {} rows",
            y.len(),
            learner.n()
        )));
    }
    let n = learner.n() as f64;
    let uty = learner.u.tr_mul(y);
    let outside = (y.norm_squared() - uty.norm_squared()).max(0.0);
    let mut shrink: Vec<f64> = learner.d.iter().map(|&d| 1.0 - eta * d).collect();
    let decay = shrink.clone();
    let mut aicc_path = Vec::with_capacity(m_upp);
    let mut df_path = Vec::with_capacity(m_upp);
    for _ in 1..=m_upp {
        // shrink holds (1 − ηd)^m
        let rss = outside + shrink.iter().zip(uty.iter()).map(|(q, c)| q * q * c * c).sum::<f64>();
        let df: f64 = shrink.iter().map(|q| 1.0 - q).sum();
        aicc_path.push(aicc_value(rss / n, df, n));
        df_path.push(df);
        for (q, r) in shrink.iter_mut().zip(&decay) {
            *q *= r;
        }
    }
    let m_stop = argmin_first(&aicc_path).ok_or(Error::SampleTooSmallForAicc(learner.n()))? + 1;
    Ok(AiccStop {
        m_stop,
        aicc_path,
        df_path,
    })
}

/// Index of the smallest defined value, first one on ties.
pub(crate) fn argmin_first(values: &[Option<f64>]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.iter().enumerate() {
        if let Some(v) = *v {
            match best {
                Some((_, b)) if v >= b => {}
                _ => best = Some((i, v)),
            }
        }
    }
    best.map(|(i, _)| i)
}

/// Stopping rule for a boosting fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Stopping {
    Fixed(usize),
    Aicc { m_upp: usize },
}

impl Default for Stopping {
    fn default() -> Self {
        Stopping::Aicc { m_upp: DEFAULT_M_UPP }
    }
}

/// Fits one unit with the ridge learner under the given stopping rule.
pub fn fit_linear(unit: &DesignData, lambda: f64, eta: f64, stopping: Stopping) -> Result<BoostFit> {
    let learner = LinearLearner::new(&unit.design.xt, lambda)?;
    let m = match stopping {
        Stopping::Fixed(m) => m,
        Stopping::Aicc { m_upp } => aicc_stop(&unit.y, &learner, eta, m_upp)?.m_stop,
    };
    debug!("'{}': ridge boosting stops at m = {m}", unit.id);
    boost_linear(&unit.y, &learner, eta, m)
}

/// Merged estimator: boosting on the stacked, jointly standardized training rows.
pub fn merged_estimator(data: &ExpandedDataset, lambda: f64, eta: f64, stopping: Stopping) -> Result<BoostFit> {
    fit_linear(&data.merged, lambda, eta, stopping)
}

/// Maps raw outcomes of one unit to raw predictions at `test_raw`:
/// X̃₀R̃ + (1/n)11ᵀ.
pub fn prediction_map(
    unit: &DesignData,
    lambda: f64,
    eta: f64,
    m: usize,
    test_raw: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let learner = LinearLearner::new(&unit.design.xt, lambda)?;
    let r = compute_r(&learner, eta, m)?;
    let mut l = unit.design.transform(test_raw) * r;
    l.add_scalar_mut(1.0 / unit.design.n() as f64);
    Ok(l)
}

/// Checks that weights are nonnegative and sum to one within 1e-12.
pub fn validate_weights(weights: &[f64], k: usize) -> Result<()> {
    if weights.len() != k {
        return Err(Error::DimensionMismatch(format!(
            "{} weights given for {k} studies",
            weights.len()
        )));
    }
    let sum: f64 = weights.iter().sum();
    if weights.iter().any(|w| !(*w >= 0.0)) || (sum - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidWeights(sum));
    }
    Ok(())
}

/// Equal weights 1/K.
pub fn equal_weights(k: usize) -> Vec<f64> {
    vec![1.0 / k as f64; k]
}

/// Per-study fits combined with fixed weights.
#[derive(Debug, Clone)]
pub struct EnsembleFit {
    pub members: Vec<BoostFit>,
    pub weights: Vec<f64>,
    /// Σ w_k β̂_k, each β̂_k on its own study's standardized scale.
    pub coefficients: DVector<f64>,
}

impl EnsembleFit {
    /// Weighted prediction for raw basis rows, each member using its own
    /// study's standardization.
    pub fn predict(&self, studies: &[DesignData], raw_basis: &DMatrix<f64>) -> DVector<f64> {
        weighted_prediction(
            studies,
            self.members.iter().map(|m| &m.coefficients),
            &self.weights,
            raw_basis,
        )
    }
}

pub(crate) fn weighted_prediction<'a>(
    studies: &[DesignData],
    coefficients: impl Iterator<Item = &'a DVector<f64>>,
    weights: &[f64],
    raw_basis: &DMatrix<f64>,
) -> DVector<f64> {
    let mut out = DVector::zeros(raw_basis.nrows());
    for ((unit, beta), w) in studies.iter().zip(coefficients).zip(weights) {
        out += unit.predict(beta, raw_basis) * *w;
    }
    out
}

pub(crate) fn weighted_sum<'a>(
    p: usize,
    coefficients: impl Iterator<Item = &'a DVector<f64>>,
    weights: &[f64],
) -> DVector<f64> {
    let mut out = DVector::zeros(p);
    for (beta, w) in coefficients.zip(weights) {
        out += beta * *w;
    }
    out
}

/// Ensemble estimator: each study boosted on its own rows with its own
/// stopping iteration, combined with fixed weights.
pub fn ensemble_estimator(
    data: &ExpandedDataset,
    lambda: f64,
    eta: f64,
    stopping: Stopping,
    weights: &[f64],
) -> Result<EnsembleFit> {
    validate_weights(weights, data.k())?;
    let members = data
        .studies
        .par_iter()
        .map(|unit| fit_linear(unit, lambda, eta, stopping))
        .collect::<Result<Vec<_>>>()?;
    let coefficients = weighted_sum(data.p(), members.iter().map(|m| &m.coefficients), weights);
    Ok(EnsembleFit {
        members,
        weights: weights.to_vec(),
        coefficients,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, n: usize, p: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, p, |_, _| rng.random_range(-1.0..1.0))
    }

    fn normalize_columns(mut x: DMatrix<f64>) -> DMatrix<f64> {
        for mut c in x.column_iter_mut() {
            let mean = c.mean();
            c.add_scalar_mut(-mean);
            let norm = c.norm();
            c /= norm;
        }
        x
    }

    fn direct_b(x: &DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
        let p = x.ncols();
        let a = x.transpose() * x + DMatrix::identity(p, p) * lambda;
        a.try_inverse().unwrap() * x.transpose()
    }

    #[test]
    fn operators_match_direct_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_matrix(&mut rng, 15, 4);
        let l = LinearLearner::new(&x, 0.7).unwrap();
        assert_abs_diff_eq!(l.b_op().clone(), direct_b(&x, 0.7), epsilon = 1e-11);
        let h = l.h_op().unwrap();
        assert_abs_diff_eq!(h.clone(), &x * l.b_op(), epsilon = 1e-10);
        assert_abs_diff_eq!(h.clone(), h.transpose(), epsilon = 1e-10);
    }

    #[test]
    fn unpenalized_hat_is_a_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_matrix(&mut rng, 12, 3);
        let h = LinearLearner::new(&x, 0.0).unwrap().h_op().unwrap();
        assert_abs_diff_eq!(&h * &h, h, epsilon = 1e-10);
    }

    #[test]
    fn huge_penalty_kills_the_hat() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_matrix(&mut rng, 12, 3);
        let h = LinearLearner::new(&x, 1e12).unwrap().h_op().unwrap();
        assert!(h.norm() < 1e-9);
    }

    #[test]
    fn single_unit_column_with_unit_penalty() {
        let x = DMatrix::from_column_slice(4, 1, &[0.5, -0.5, 0.5, -0.5]);
        let h = LinearLearner::new(&x, 1.0).unwrap().h_op().unwrap();
        assert_abs_diff_eq!(h, &x * x.transpose() / 2.0, epsilon = 1e-14);
    }

    #[test]
    fn rank_deficient_without_penalty() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        assert!(matches!(LinearLearner::new(&x, 0.0), Err(Error::RankDeficient)));
        assert!(LinearLearner::new(&x, 0.1).is_ok());
        let wide = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 2.0, 0.0, 1.0, 1.0]);
        assert!(matches!(LinearLearner::new(&wide, 0.0), Err(Error::RankDeficient)));
    }

    #[test]
    fn negative_lambda_rejected() {
        let x = DMatrix::identity(3, 2);
        assert!(LinearLearner::new(&x, -1.0).is_err());
    }

    #[test]
    fn one_full_step_is_least_squares() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random_matrix(&mut rng, 20, 5);
        let y = DVector::from_fn(20, |_, _| rng.random_range(-2.0..2.0));
        let l = LinearLearner::new(&x, 0.0).unwrap();
        let fit = boost_linear(&y, &l, 1.0, 1).unwrap();
        let ols = (x.transpose() * &x).lu().solve(&(x.transpose() * &y)).unwrap();
        assert_abs_diff_eq!(fit.coefficients, ols, epsilon = 1e-10);
    }

    #[test]
    fn saturates_on_full_rank_square_design() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_matrix(&mut rng, 6, 6);
        let y = DVector::from_fn(6, |_, _| rng.random_range(-2.0..2.0));
        let l = LinearLearner::new(&x, 0.0).unwrap();
        let fit = boost_linear(&y, &l, 1.0, 200).unwrap();
        assert_abs_diff_eq!(fit.fitted_path.last().unwrap().clone(), y, epsilon = 1e-8);
    }

    #[test]
    fn iterative_path_matches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = random_matrix(&mut rng, 20, 5);
        let y = DVector::from_fn(20, |_, _| rng.random_range(-2.0..2.0));
        let l = LinearLearner::new(&x, 0.3).unwrap();
        let fit = boost_linear(&y, &l, 0.5, 50).unwrap();
        let b = direct_b(&x, 0.3);
        let h = &x * &b;
        let step = DMatrix::identity(20, 20) - &h * 0.5;
        let mut power = DMatrix::identity(20, 20);
        let mut beta = DVector::zeros(5);
        for m in 0..50 {
            beta += &b * &power * &y * 0.5;
            power = &step * power;
            assert!((&beta - &fit.coefficient_path[m]).amax() < 1e-10);
        }
    }

    #[test]
    fn boosting_operator_first_iteration_is_hat() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = random_matrix(&mut rng, 10, 3);
        let l = LinearLearner::new(&x, 0.5).unwrap();
        assert_abs_diff_eq!(
            boosting_operator(&l, 1.0, 0).unwrap(),
            l.h_op().unwrap(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn boosting_operator_matches_fitted_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = random_matrix(&mut rng, 10, 3);
        let y = DVector::from_fn(10, |_, _| rng.random_range(-2.0..2.0));
        let l = LinearLearner::new(&x, 0.5).unwrap();
        let fit = boost_linear(&y, &l, 0.3, 7).unwrap();
        for k in 1..=7 {
            let op = boosting_operator(&l, 0.3, k - 1).unwrap();
            assert_abs_diff_eq!(op * &y, fit.fitted_path[k - 1].clone(), epsilon = 1e-10);
        }
    }

    #[test]
    fn boosting_operator_eigenvalues() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random_matrix(&mut rng, 8, 3);
        let l = LinearLearner::new(&x, 0.2).unwrap();
        let h = l.h_op().unwrap();
        let mut d: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
        let mut got: Vec<f64> = boosting_operator(&l, 0.4, 3)
            .unwrap()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .collect();
        d.iter_mut().for_each(|di| *di = 1.0 - (1.0 - 0.4 * *di).powi(4));
        d.sort_by(f64::total_cmp);
        got.sort_by(f64::total_cmp);
        for (a, b) in d.iter().zip(&got) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn compute_r_small_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let x = random_matrix(&mut rng, 9, 3);
        let l = LinearLearner::new(&x, 0.4).unwrap();
        let b = l.b_op().clone();
        assert_abs_diff_eq!(compute_r(&l, 1.0, 1).unwrap(), b.clone(), epsilon = 1e-12);
        let h = l.h_op().unwrap();
        let two = &b * 0.5 + &b * (DMatrix::identity(9, 9) - &h * 0.5) * 0.5;
        assert_abs_diff_eq!(compute_r(&l, 0.5, 2).unwrap(), two, epsilon = 1e-12);
        let fitted = &x * compute_r(&l, 0.5, 6).unwrap();
        assert_abs_diff_eq!(fitted, boosting_operator(&l, 0.5, 5).unwrap(), epsilon = 1e-10);
    }

    #[test]
    fn operator_cap_enforced() {
        let x = DMatrix::from_fn(30, 2, |i, j| ((i * 7 + j * 3) % 11) as f64);
        let l = LinearLearner::new(&x, 1.0).unwrap().with_operator_cap(10);
        assert!(matches!(l.h_op(), Err(Error::OperatorTooLarge { n: 30, cap: 10 })));
    }

    #[test]
    fn aicc_singleton_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = random_matrix(&mut rng, 20, 3);
        let y = DVector::from_fn(20, |_, _| rng.random_range(-2.0..2.0));
        let l = LinearLearner::new(&x, 1.0).unwrap();
        assert_eq!(aicc_stop(&y, &l, 0.5, 1).unwrap().m_stop, 1);
    }

    #[test]
    fn aicc_matches_brute_force_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x = normalize_columns(random_matrix(&mut rng, 30, 4));
        let beta = DVector::from_vec(vec![2.0, -1.0, 0.0, 0.5]);
        let y = &x * beta + DVector::from_fn(30, |_, _| rng.random_range(-0.3..0.3));
        let l = LinearLearner::new(&x, 0.0).unwrap();
        let got = aicc_stop(&y, &l, 0.1, 80).unwrap();
        let h = &x * direct_b(&x, 0.0);
        let step = DMatrix::identity(30, 30) - &h * 0.1;
        let mut power = step.clone();
        let mut best = (0, f64::INFINITY);
        for m in 1..=80 {
            let op = DMatrix::identity(30, 30) - &power;
            let resid = &y - &op * &y;
            let df = op.trace();
            let v = (resid.norm_squared() / 30.0).ln() + (1.0 + df / 30.0) / (1.0 - (df + 2.0) / 30.0);
            assert!((got.aicc_path[m - 1].unwrap() - v).abs() < 1e-9);
            if v < best.1 {
                best = (m, v);
            }
            power = &step * power;
        }
        assert_eq!(got.m_stop, best.0);
    }

    #[test]
    fn aicc_rejects_tiny_samples() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let y = DVector::from_vec(vec![1.0, 2.0, 0.5]);
        let l = LinearLearner::new(&x, 0.0).unwrap();
        assert!(matches!(
            aicc_stop(&y, &l, 1.0, 5),
            Err(Error::SampleTooSmallForAicc(3))
        ));
    }

    #[test]
    fn argmin_prefers_first() {
        assert_eq!(argmin_first(&[None, Some(1.0), Some(0.5), Some(0.5)]), Some(2));
        assert_eq!(argmin_first(&[None, None]), None);
    }

    #[test]
    fn weights_validated() {
        assert!(validate_weights(&[0.5, 0.5], 2).is_ok());
        assert!(matches!(
            validate_weights(&[0.5, 0.6], 2),
            Err(Error::InvalidWeights(_))
        ));
        assert!(validate_weights(&[1.5, -0.5], 2).is_err());
        assert!(validate_weights(&[1.0], 2).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use rand::Rng;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]
            #[test]
            fn df_nondecreasing_and_rss_nonincreasing(seed in any::<u64>(), eta in 0.05f64..=1.0, lambda in prop_oneof![Just(0.0), 0.01f64..10.0]) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let x = random_matrix(&mut rng, 25, 4);
                let y = DVector::from_fn(25, |_, _| rng.random_range(-2.0..2.0));
                let l = LinearLearner::new(&x, lambda).unwrap();
                let fit = boost_linear(&y, &l, eta, 30).unwrap();
                for w in fit.df_path.windows(2) {
                    prop_assert!(w[1] >= w[0] - 1e-12);
                }
                if lambda == 0.0 {
                    let rss: Vec<f64> = fit.fitted_path.iter().map(|f| (&y - f).norm()).collect();
                    for w in rss.windows(2) {
                        prop_assert!(w[1] <= w[0] + 1e-12);
                    }
                }
                let h = l.h_op().unwrap();
                for e in h.symmetric_eigenvalues().iter() {
                    prop_assert!(*e >= -1e-10 && *e <= 1.0 + 1e-10);
                }
            }
        }
    }
}
