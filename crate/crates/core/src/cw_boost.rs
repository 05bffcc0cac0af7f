//! Component-wise least-squares boosting and its selection polyhedron.
//!
//! Every iteration fits a univariate least-squares learner to the current
//! residual on the column that minimizes the residual sum of squares, and
//! adds η times its slope to that coefficient. Ties go to the smallest column
//! index and a zero correlation gets sign +1.
//!
//! Indices are 0-based throughout.

use log::debug;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::dataset::{DesignData, ExpandedDataset};
use crate::error::{Error, Result};
use crate::linear_boost::{
    aicc_value, argmin_first, validate_weights, weighted_prediction, weighted_sum, Stopping, DEFAULT_OPERATOR_CAP,
};

/// Default cap on dense entries of Γ.
pub const DEFAULT_POLYHEDRON_CAP: usize = 50_000_000;

/// Result of component-wise boosting.
#[derive(Debug, Clone)]
pub struct CwBoostFit {
    pub coefficients: DVector<f64>,
    /// ĵ at iterations 1..=m_stop.
    pub selected: Vec<usize>,
    /// Unscaled univariate slope x_ĵᵀr/‖x_ĵ‖² at each iteration.
    pub steps: Vec<f64>,
    /// sign(x_ĵᵀr) at each iteration, +1 when zero.
    pub signs: Vec<f64>,
    pub eta: f64,
    pub m_stop: usize,
    /// Residual r entering iterations 1..=m_stop (the first is y).
    pub residual_path: Vec<DVector<f64>>,
    /// Coefficients after iterations 1..=m_stop.
    pub coefficient_path: Vec<DVector<f64>>,
}

impl CwBoostFit {
    /// Rebuilds the coefficients from the per-iteration slopes.
    pub fn reconstruct(&self, p: usize) -> DVector<f64> {
        let mut beta = DVector::zeros(p);
        for (&j, &s) in self.selected.iter().zip(&self.steps) {
            beta[j] += self.eta * s;
        }
        beta
    }

    /// Fit truncated to its first `m` iterations.
    pub fn truncated(&self, m: usize) -> Self {
        let m = m.min(self.m_stop);
        Self {
            coefficients: if m == 0 {
                DVector::zeros(self.coefficients.len())
            } else {
                self.coefficient_path[m - 1].clone()
            },
            selected: self.selected[..m].to_vec(),
            steps: self.steps[..m].to_vec(),
            signs: self.signs[..m].to_vec(),
            eta: self.eta,
            m_stop: m,
            residual_path: self.residual_path[..m].to_vec(),
            coefficient_path: self.coefficient_path[..m].to_vec(),
        }
    }
}

fn column_norms2(xt: &DMatrix<f64>) -> Vec<f64> {
    xt.column_iter().map(|c| c.norm_squared()).collect()
}

/// Residual sum of squares after regressing `r` on a single column.
pub fn univariate_rss(column_norm2: f64, inner: f64, r_norm2: f64) -> f64 {
    if column_norm2 == 0.0 {
        r_norm2
    } else {
        r_norm2 - inner * inner / column_norm2
    }
}

/// Column minimizing the univariate residual sum of squares, smallest index
/// on ties. Zero columns are never chosen unless every column is zero.
fn select_column(inner: &DVector<f64>, norms2: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (j, (&c, &n2)) in inner.iter().zip(norms2).enumerate() {
        if n2 == 0.0 {
            continue;
        }
        // minimizing ‖r‖² − c²/n2 is maximizing c²/n2
        let gain = c * c / n2;
        match best {
            Some((_, g)) if gain <= g => {}
            _ => best = Some((j, gain)),
        }
    }
    best.map(|(j, _)| j)
}

fn check_inputs(y: &DVector<f64>, xt: &DMatrix<f64>, eta: f64) -> Result<()> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::InvalidInput(format!("eta must lie in (0, 1], got {eta}")));
    }
    if y.len() != xt.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "y has {} entries, design has {} rows",
            y.len(),
            xt.nrows()
        )));
    }
    if xt.ncols() == 0 {
        return Err(Error::InvalidInput("empty design".into()));
    }
    Ok(())
}

/// Runs m iterations of component-wise boosting.
pub fn boost_componentwise(y: &DVector<f64>, xt: &DMatrix<f64>, eta: f64, m: usize) -> Result<CwBoostFit> {
    check_inputs(y, xt, eta)?;
    if m == 0 {
        return Err(Error::InvalidInput("number of iterations must be at least 1".into()));
    }
    let p = xt.ncols();
    let norms2 = column_norms2(xt);
    let mut r = y.clone();
    let mut beta = DVector::zeros(p);
    let mut fit = CwBoostFit {
        coefficients: DVector::zeros(p),
        selected: Vec::with_capacity(m),
        steps: Vec::with_capacity(m),
        signs: Vec::with_capacity(m),
        eta,
        m_stop: m,
        residual_path: Vec::with_capacity(m),
        coefficient_path: Vec::with_capacity(m),
    };
    for _ in 0..m {
        let inner = xt.tr_mul(&r);
        let j =
            select_column(&inner, &norms2).ok_or_else(|| Error::InvalidInput("every design column is zero".into()))?;
        let slope = inner[j] / norms2[j];
        fit.residual_path.push(r.clone());
        fit.selected.push(j);
        fit.steps.push(slope);
        fit.signs.push(if inner[j] < 0.0 { -1.0 } else { 1.0 });
        beta[j] += eta * slope;
        r.axpy(-eta * slope, &xt.column(j), 1.0);
        fit.coefficient_path.push(beta.clone());
    }
    fit.coefficients = beta;
    Ok(fit)
}

/// Υ ← (I − ηx xᵀ/‖x‖²) Υ, in place.
fn apply_step(upsilon: &mut DMatrix<f64>, x: &DVector<f64>, norm2: f64, eta: f64) {
    let proj = upsilon.tr_mul(x) / norm2;
    upsilon.ger(-eta, x, &proj, 1.0);
}

/// Σ_m η B_(m) Υ_(m) y with B_(m) = e_ĵ(x_ĵᵀx_ĵ)⁻¹x_ĵᵀ and
/// Υ_(m) = (I − ηH_(m−1))⋯(I − ηH_(1)), Υ_(1) = I.
pub fn cw_closed_form(y: &DVector<f64>, xt: &DMatrix<f64>, selected: &[usize], eta: f64) -> Result<DVector<f64>> {
    check_inputs(y, xt, eta)?;
    let (n, p) = xt.shape();
    if let Some(&bad) = selected.iter().find(|&&j| j >= p) {
        return Err(Error::InvalidInput(format!(
            "selected column {bad} out of range (P = {p})"
        )));
    }
    let norms2 = column_norms2(xt);
    let mut upsilon = DMatrix::<f64>::identity(n, n);
    let mut beta = DVector::zeros(p);
    for &j in selected {
        if norms2[j] == 0.0 {
            return Err(Error::InvalidInput(format!("selected column {j} is zero")));
        }
        let x = xt.column(j).into_owned();
        beta[j] += eta * x.dot(&(&upsilon * y)) / norms2[j];
        apply_step(&mut upsilon, &x, norms2[j], eta);
    }
    Ok(beta)
}

/// Selection polyhedron {y : Γy ≥ 0} and contrast vectors of a fit.
#[derive(Debug, Clone)]
pub struct SelectionPath {
    /// 2M(P−1) × N.
    pub gamma: DMatrix<f64>,
    pub signs: Vec<f64>,
    /// Υ_(1..=M), each N × N.
    pub upsilon: Vec<DMatrix<f64>>,
    /// N × P; column j is v_j, so β̂_j = v_jᵀy.
    pub v: DMatrix<f64>,
    pub selected: Vec<usize>,
    pub eta: f64,
}

/// Caps on dense memory used by [`build_selection_path`].
#[derive(Debug, Clone, Copy)]
pub struct PathLimits {
    pub polyhedron_entries: usize,
    pub operator_rows: usize,
}

impl Default for PathLimits {
    fn default() -> Self {
        Self {
            polyhedron_entries: DEFAULT_POLYHEDRON_CAP,
            operator_rows: DEFAULT_OPERATOR_CAP,
        }
    }
}

/// Builds Γ, Υ and v for a fit produced on `xt`.
pub fn build_selection_path(fit: &CwBoostFit, xt: &DMatrix<f64>) -> Result<SelectionPath> {
    build_selection_path_with(fit, xt, PathLimits::default())
}

pub fn build_selection_path_with(fit: &CwBoostFit, xt: &DMatrix<f64>, limits: PathLimits) -> Result<SelectionPath> {
    let (n, p) = xt.shape();
    let m = fit.m_stop;
    if n > limits.operator_rows {
        return Err(Error::OperatorTooLarge {
            n,
            cap: limits.operator_rows,
        });
    }
    let rows = 2 * m * (p - 1);
    let entries = rows.saturating_mul(n).max(m.saturating_mul(n * n));
    if entries > limits.polyhedron_entries {
        return Err(Error::PolyhedronTooLarge {
            entries,
            cap: limits.polyhedron_entries,
        });
    }
    let norms2 = column_norms2(xt);
    let unit: Vec<DVector<f64>> = xt
        .column_iter()
        .zip(&norms2)
        .map(|(c, &n2)| if n2 == 0.0 { DVector::zeros(n) } else { c / n2.sqrt() })
        .collect();

    let mut upsilon = Vec::with_capacity(m);
    let mut current = DMatrix::<f64>::identity(n, n);
    for &j in &fit.selected {
        upsilon.push(current.clone());
        apply_step(&mut current, &xt.column(j).into_owned(), norms2[j], fit.eta);
    }

    let mut gamma = DMatrix::zeros(rows, n);
    for (step, (&jhat, &sgn)) in fit.selected.iter().zip(&fit.signs).enumerate() {
        let ups = &upsilon[step];
        let lead = ups.tr_mul(&unit[jhat]) * sgn;
        let base = 2 * (p - 1) * step;
        for j in (0..p).filter(|&j| j != jhat) {
            let offset = usize::from(j > jhat);
            let row = base + 2 * (j - offset);
            let other = ups.tr_mul(&unit[j]);
            gamma.row_mut(row).tr_copy_from(&(&lead + &other));
            gamma.row_mut(row + 1).tr_copy_from(&(&lead - &other));
        }
    }

    let v = contrast_vectors(&upsilon, &fit.selected, xt, &norms2, fit.eta);
    Ok(SelectionPath {
        gamma,
        signs: fit.signs.clone(),
        upsilon,
        v,
        selected: fit.selected.clone(),
        eta: fit.eta,
    })
}

fn contrast_vectors(
    upsilon: &[DMatrix<f64>],
    selected: &[usize],
    xt: &DMatrix<f64>,
    norms2: &[f64],
    eta: f64,
) -> DMatrix<f64> {
    let (n, p) = xt.shape();
    let mut v = DMatrix::zeros(n, p);
    for (ups, &j) in upsilon.iter().zip(selected) {
        let contribution = ups.tr_mul(&xt.column(j)) * (eta / norms2[j]);
        let mut col = v.column_mut(j);
        col += contribution;
    }
    v
}

impl SelectionPath {
    pub fn m(&self) -> usize {
        self.selected.len()
    }

    pub fn n(&self) -> usize {
        self.v.nrows()
    }

    pub fn p(&self) -> usize {
        self.v.ncols()
    }

    /// Path of the first `m` iterations: the leading 2m(P−1) rows of Γ and
    /// contrasts recomputed over those iterations.
    pub fn prefix(&self, m: usize, xt: &DMatrix<f64>) -> SelectionPath {
        let m = m.min(self.m());
        let rows = 2 * m * (self.p() - 1);
        let norms2 = column_norms2(xt);
        SelectionPath {
            gamma: self.gamma.rows(0, rows).into_owned(),
            signs: self.signs[..m].to_vec(),
            upsilon: self.upsilon[..m].to_vec(),
            v: contrast_vectors(&self.upsilon[..m], &self.selected[..m], xt, &norms2, self.eta),
            selected: self.selected[..m].to_vec(),
            eta: self.eta,
        }
    }

    /// Whether column j was selected at least once.
    pub fn is_active(&self, j: usize) -> bool {
        self.selected.contains(&j)
    }

    /// Distinct selected columns in increasing order.
    pub fn active_set(&self) -> Vec<usize> {
        let mut a = self.selected.clone();
        a.sort_unstable();
        a.dedup();
        a
    }
}

/// Runs component-wise boosting to m_upp while tracking the boosting
/// operator I − Υ_(m+1), and returns the AICc-minimizing iteration.
pub fn cw_aicc_stop(
    y: &DVector<f64>,
    xt: &DMatrix<f64>,
    eta: f64,
    m_upp: usize,
) -> Result<crate::linear_boost::AiccStop> {
    let n = xt.nrows();
    if n > DEFAULT_OPERATOR_CAP {
        return Err(Error::OperatorTooLarge {
            n,
            cap: DEFAULT_OPERATOR_CAP,
        });
    }
    let fit = boost_componentwise(y, xt, eta, m_upp)?;
    let norms2 = column_norms2(xt);
    let nf = n as f64;
    let mut upsilon = DMatrix::<f64>::identity(n, n);
    let mut aicc_path = Vec::with_capacity(m_upp);
    let mut df_path = Vec::with_capacity(m_upp);
    for (step, &j) in fit.selected.iter().enumerate() {
        apply_step(&mut upsilon, &xt.column(j).into_owned(), norms2[j], eta);
        let residual = match fit.residual_path.get(step + 1) {
            Some(r) => r.clone(),
            None => &upsilon * y,
        };
        let df = nf - upsilon.trace();
        df_path.push(df);
        aicc_path.push(aicc_value(residual.norm_squared() / nf, df, nf));
    }
    let m_stop = argmin_first(&aicc_path).ok_or(Error::SampleTooSmallForAicc(n))? + 1;
    Ok(crate::linear_boost::AiccStop {
        m_stop,
        aicc_path,
        df_path,
    })
}

/// Fits one unit with component-wise boosting under the given stopping rule.
pub fn fit_componentwise(unit: &DesignData, eta: f64, stopping: Stopping) -> Result<CwBoostFit> {
    let m = match stopping {
        Stopping::Fixed(m) => m,
        Stopping::Aicc { m_upp } => cw_aicc_stop(&unit.y, &unit.design.xt, eta, m_upp)?.m_stop,
    };
    debug!("'{}': component-wise boosting stops at m = {m}", unit.id);
    boost_componentwise(&unit.y, &unit.design.xt, eta, m)
}

/// Per-study component-wise fits combined with fixed weights.
#[derive(Debug, Clone)]
pub struct CwEnsembleFit {
    pub members: Vec<CwBoostFit>,
    pub paths: Vec<SelectionPath>,
    pub weights: Vec<f64>,
    pub coefficients: DVector<f64>,
}

impl CwEnsembleFit {
    pub fn predict(&self, studies: &[DesignData], raw_basis: &DMatrix<f64>) -> DVector<f64> {
        weighted_prediction(
            studies,
            self.members.iter().map(|m| &m.coefficients),
            &self.weights,
            raw_basis,
        )
    }
}

/// Component-wise ensemble with per-study selection paths retained.
pub fn cw_ensemble(data: &ExpandedDataset, eta: f64, stopping: Stopping, weights: &[f64]) -> Result<CwEnsembleFit> {
    validate_weights(weights, data.k())?;
    let fitted = data
        .studies
        .par_iter()
        .map(|unit| {
            let fit = fit_componentwise(unit, eta, stopping)?;
            let path = build_selection_path(&fit, &unit.design.xt)?;
            Ok((fit, path))
        })
        .collect::<Result<Vec<_>>>()?;
    let (members, paths): (Vec<_>, Vec<_>) = fitted.into_iter().unzip();
    let coefficients = weighted_sum(data.p(), members.iter().map(|m: &CwBoostFit| &m.coefficients), weights);
    Ok(CwEnsembleFit {
        members,
        paths,
        weights: weights.to_vec(),
        coefficients,
    })
}
