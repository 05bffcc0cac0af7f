//! Truncation limits of a selected coefficient given its selection path, and
//! the resulting conditional mean squared error.

use nalgebra::{DMatrix, DVector};

use super::truncnorm::TruncatedNormalParams;
use crate::cw_boost::SelectionPath;
use crate::error::{Error, Result};

/// Relative tolerance below which v'Σv counts as zero.
const CONTRAST_TOL: f64 = 1e-14;
/// Relative tolerance below which (Γc)_ℓ counts as zero.
const ROW_TOL: f64 = 1e-12;

/// Y ~ N(μ, Σ) with Σ = blkdiag(Z_k G Z_kᵀ + σε² I).
#[derive(Debug, Clone)]
pub struct GaussianModel {
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub g_diag: DVector<f64>,
    pub sigma_eps2: f64,
}

impl GaussianModel {
    /// Builds Σ block by block from the random-effect designs of each study.
    pub fn from_blocks(
        mu: DVector<f64>,
        z_blocks: &[DMatrix<f64>],
        g_diag: DVector<f64>,
        sigma_eps2: f64,
    ) -> Result<Self> {
        if g_diag.iter().any(|g| !(*g >= 0.0)) || !(sigma_eps2 >= 0.0) {
            return Err(Error::InvalidInput("variance components must be nonnegative".into()));
        }
        let n: usize = z_blocks.iter().map(|z| z.nrows()).sum();
        if n != mu.len() {
            return Err(Error::DimensionMismatch(format!(
                "mean has {} entries, blocks cover {n} rows",
                mu.len()
            )));
        }
        let mut sigma = DMatrix::zeros(n, n);
        let mut offset = 0;
        for z in z_blocks {
            if z.ncols() != g_diag.len() {
                return Err(Error::DimensionMismatch(format!(
                    "Z block has {} columns, G has {}",
                    z.ncols(),
                    g_diag.len()
                )));
            }
            let nk = z.nrows();
            let zg = z * DMatrix::from_diagonal(&g_diag);
            let mut block = zg * z.transpose();
            for i in 0..nk {
                block[(i, i)] += sigma_eps2;
            }
            sigma.view_mut((offset, offset), (nk, nk)).copy_from(&block);
            offset += nk;
        }
        Ok(Self {
            mu,
            sigma,
            g_diag,
            sigma_eps2,
        })
    }

    /// Single study: Σ = Z G Zᵀ + σε² I.
    pub fn single(mu: DVector<f64>, z: &DMatrix<f64>, g_diag: DVector<f64>, sigma_eps2: f64) -> Result<Self> {
        Self::from_blocks(mu, std::slice::from_ref(z), g_diag, sigma_eps2)
    }

    /// Σ = σ² I with no random effects.
    pub fn isotropic(mu: DVector<f64>, sigma2: f64) -> Self {
        let n = mu.len();
        Self {
            mu,
            sigma: DMatrix::identity(n, n) * sigma2,
            g_diag: DVector::zeros(0),
            sigma_eps2: sigma2,
        }
    }

    pub fn n(&self) -> usize {
        self.mu.len()
    }
}

/// Output of [`truncation_limits`].
#[derive(Debug, Clone)]
pub struct TruncationLimits {
    pub params: TruncatedNormalParams,
    /// v_jᵀy at the observed outcome.
    pub observed: f64,
    /// c_j = Σv_j/(v_jᵀΣv_j).
    pub c: DVector<f64>,
    /// z_j = (I − c_j v_jᵀ) y.
    pub z: DVector<f64>,
    /// Rows with (Γc)_ℓ = 0 all satisfy (Γz)_ℓ ≥ 0.
    pub zero_rows_feasible: bool,
}

/// Lower and upper limits for v_jᵀY given ΓY ≥ 0 and z_j = z.
pub fn truncation_limits(
    path: &SelectionPath,
    model: &GaussianModel,
    j: usize,
    y: &DVector<f64>,
) -> Result<TruncationLimits> {
    if j >= path.p() {
        return Err(Error::InvalidInput(format!(
            "coefficient {j} out of range (P = {})",
            path.p()
        )));
    }
    limits_for_contrast(&path.gamma, &path.v.column(j).into_owned(), model, y)
}

/// [`truncation_limits`] for an arbitrary contrast vector and polyhedron.
pub fn limits_for_contrast(
    gamma: &DMatrix<f64>,
    v: &DVector<f64>,
    model: &GaussianModel,
    y: &DVector<f64>,
) -> Result<TruncationLimits> {
    let n = model.n();
    if v.len() != n || y.len() != n || gamma.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "contrast, outcome and polyhedron must all have {n} entries"
        )));
    }
    let sv = &model.sigma * v;
    let theta2 = v.dot(&sv);
    let scale = v.norm_squared() * model.sigma.diagonal().amax();
    if !(theta2 > CONTRAST_TOL * scale) || scale == 0.0 {
        return Err(Error::DegenerateContrast(theta2));
    }
    let c = sv / theta2;
    let observed = v.dot(y);
    let z = y - &c * observed;
    let gc = gamma * &c;
    let gz = gamma * &z;
    let mut a = f64::NEG_INFINITY;
    let mut b = f64::INFINITY;
    let mut zero_rows_feasible = true;
    let c_norm = c.norm();
    for (l, (&gcl, &gzl)) in gc.iter().zip(gz.iter()).enumerate() {
        let row_scale = gamma.row(l).norm();
        let tol = ROW_TOL * row_scale * c_norm;
        if gcl > tol {
            a = a.max(-gzl / gcl);
        } else if gcl < -tol {
            b = b.min(-gzl / gcl);
        } else if gzl < -ROW_TOL * row_scale * z.norm().max(1.0) {
            zero_rows_feasible = false;
        }
    }
    let params = TruncatedNormalParams::new(v.dot(&model.mu), theta2, a, b)?;
    Ok(TruncationLimits {
        params,
        observed,
        c,
        z,
        zero_rows_feasible,
    })
}

/// Conditional mean and variance of a selected coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionalMoments {
    pub mean: f64,
    pub variance: f64,
    /// `None` when the coefficient was never selected and is identically 0.
    pub params: Option<TruncatedNormalParams>,
}

impl ConditionalMoments {
    /// Moments of s·β̂ for a positive rescaling s.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            mean: self.mean * s,
            variance: self.variance * s * s,
            params: self.params.map(|p| TruncatedNormalParams {
                mu_bar: p.mu_bar * s,
                theta2: p.theta2 * s * s,
                a: p.a * s,
                b: p.b * s,
            }),
        }
    }
}

/// Conditional moments of β̂_j given the selection path. A coefficient that
/// was never selected is the constant 0.
pub fn conditional_moments(
    path: &SelectionPath,
    model: &GaussianModel,
    j: usize,
    y: &DVector<f64>,
) -> Result<ConditionalMoments> {
    if j < path.p() && !path.is_active(j) {
        return Ok(ConditionalMoments {
            mean: 0.0,
            variance: 0.0,
            params: None,
        });
    }
    let limits = truncation_limits(path, model, j, y)?;
    let (mean, variance) = limits.params.moments()?;
    Ok(ConditionalMoments {
        mean,
        variance,
        params: Some(limits.params),
    })
}

/// Conditional MSE decomposed into squared bias and variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionalMse {
    pub mse: f64,
    pub bias2: f64,
    pub variance: f64,
    pub mean: f64,
}

impl ConditionalMse {
    fn from_parts(mean: f64, variance: f64, beta: f64) -> Self {
        let bias2 = (mean - beta) * (mean - beta);
        Self {
            mse: bias2 + variance,
            bias2,
            variance,
            mean,
        }
    }
}

/// (E[β̂_j | path] − β_j)² + Var[β̂_j | path] for the merged estimator.
pub fn conditional_mse_merged(
    path: &SelectionPath,
    model: &GaussianModel,
    j: usize,
    y: &DVector<f64>,
    beta_j: f64,
) -> Result<ConditionalMse> {
    let m = conditional_moments(path, model, j, y)?;
    Ok(ConditionalMse::from_parts(m.mean, m.variance, beta_j))
}

/// Combines per-study conditional moments with fixed weights:
/// (Σ w_k mean_k − β_j)² + Σ w_k² var_k.
pub fn combine_ensemble(moments: &[ConditionalMoments], weights: &[f64], beta_j: f64) -> Result<ConditionalMse> {
    crate::linear_boost::validate_weights(weights, moments.len())?;
    let mean: f64 = moments.iter().zip(weights).map(|(m, w)| w * m.mean).sum();
    let variance: f64 = moments.iter().zip(weights).map(|(m, w)| w * w * m.variance).sum();
    Ok(ConditionalMse::from_parts(mean, variance, beta_j))
}

/// Conditional MSE of the weighted ensemble, studies treated as independent.
pub fn conditional_mse_ensemble(
    paths: &[SelectionPath],
    models: &[GaussianModel],
    ys: &[DVector<f64>],
    j: usize,
    weights: &[f64],
    beta_j: f64,
) -> Result<ConditionalMse> {
    if paths.len() != models.len() || paths.len() != ys.len() {
        return Err(Error::DimensionMismatch(
            "paths, models and outcomes must have one entry per study".into(),
        ));
    }
    let moments = paths
        .iter()
        .zip(models)
        .zip(ys)
        .map(|((p, m), y)| conditional_moments(p, m, j, y))
        .collect::<Result<Vec<_>>>()?;
    combine_ensemble(&moments, weights, beta_j)
}
