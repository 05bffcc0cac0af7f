//! Fourier–Motzkin elimination and the joint truncation region of the
//! selected coefficients.
//!
//! Polyhedra are stored as {x : A x ≥ b}.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use super::lemma::GaussianModel;
use crate::cw_boost::SelectionPath;
use crate::error::{Error, Result};

/// Relative size below which a coefficient counts as zero.
const COEF_TOL: f64 = 1e-12;
/// Default cap on rows produced while eliminating.
pub const DEFAULT_ROW_CAP: usize = 200_000;

/// {x : a_mat x ≥ b_vec}.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyhedron {
    pub a_mat: DMatrix<f64>,
    pub b_vec: DVector<f64>,
}

impl Polyhedron {
    pub fn new(a_mat: DMatrix<f64>, b_vec: DVector<f64>) -> Result<Self> {
        if a_mat.nrows() != b_vec.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} constraint rows but {} right-hand sides",
                a_mat.nrows(),
                b_vec.len()
            )));
        }
        Ok(Self { a_mat, b_vec })
    }

    pub fn rows(&self) -> usize {
        self.a_mat.nrows()
    }

    pub fn vars(&self) -> usize {
        self.a_mat.ncols()
    }

    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        (&self.a_mat * x - &self.b_vec).iter().all(|r| *r >= -tol)
    }

    /// Feasible interval of coordinate `var` with every other coordinate
    /// fixed to `x` (entry `var` of `x` is ignored). Returns `None` when a
    /// constraint not involving `var` fails.
    pub fn interval(&self, var: usize, x: &DVector<f64>, tol: f64) -> Option<(f64, f64)> {
        let mut lo = f64::NEG_INFINITY;
        let mut hi = f64::INFINITY;
        for i in 0..self.rows() {
            let row = self.a_mat.row(i);
            let coef = row[var];
            let rest: f64 = (0..self.vars()).filter(|&k| k != var).map(|k| row[k] * x[k]).sum();
            let rhs = self.b_vec[i] - rest;
            if coef.abs() <= COEF_TOL * row.amax().max(f64::MIN_POSITIVE) {
                if rhs > tol {
                    return None;
                }
            } else if coef > 0.0 {
                lo = lo.max(rhs / coef);
            } else {
                hi = hi.min(rhs / coef);
            }
        }
        Some((lo, hi))
    }

    /// Drops rows with all-zero coefficients that hold trivially and merges
    /// rows whose normalized coefficients agree to ~1e-10, keeping the
    /// tightest right-hand side.
    pub fn prune(&self) -> Polyhedron {
        let mut kept: Vec<(Vec<f64>, f64)> = Vec::new();
        let mut index: HashMap<Vec<i64>, usize> = HashMap::new();
        for i in 0..self.rows() {
            let row = self.a_mat.row(i);
            let scale = row.amax();
            if scale == 0.0 {
                if self.b_vec[i] <= 0.0 {
                    continue;
                }
                kept.push((vec![0.0; self.vars()], self.b_vec[i]));
                continue;
            }
            let coefs: Vec<f64> = row.iter().map(|v| v / scale).collect();
            let rhs = self.b_vec[i] / scale;
            let key: Vec<i64> = coefs.iter().map(|v| (v * 1e10).round() as i64).collect();
            match index.get(&key) {
                Some(&k) => kept[k].1 = kept[k].1.max(rhs),
                None => {
                    index.insert(key, kept.len());
                    kept.push((coefs, rhs));
                }
            }
        }
        let vars = self.vars();
        let a_mat = DMatrix::from_fn(kept.len(), vars, |i, j| kept[i].0[j]);
        let b_vec = DVector::from_iterator(kept.len(), kept.iter().map(|r| r.1));
        Polyhedron { a_mat, b_vec }
    }
}

/// Projects out coordinate `var`: rows are split by the sign of their
/// coefficient on `var`, every positive row is paired with every negative
/// row, and rows not involving `var` are kept.
pub fn fourier_motzkin_eliminate(poly: &Polyhedron, var: usize) -> Result<Polyhedron> {
    fourier_motzkin_eliminate_capped(poly, var, DEFAULT_ROW_CAP)
}

pub fn fourier_motzkin_eliminate_capped(poly: &Polyhedron, var: usize, row_cap: usize) -> Result<Polyhedron> {
    let vars = poly.vars();
    if var >= vars {
        return Err(Error::InvalidInput(format!(
            "variable {var} out of range ({vars} variables)"
        )));
    }
    let keep: Vec<usize> = (0..vars).filter(|&k| k != var).collect();
    let mut positive = Vec::new();
    let mut negative = Vec::new();
    let mut zero = Vec::new();
    for i in 0..poly.rows() {
        let row = poly.a_mat.row(i);
        let coef = row[var];
        let rest: Vec<f64> = keep.iter().map(|&k| row[k]).collect();
        if coef.abs() <= COEF_TOL * row.amax().max(f64::MIN_POSITIVE) {
            zero.push((rest, poly.b_vec[i]));
        } else {
            // divide by |coef| so the eliminated coefficient becomes ±1
            let s = coef.abs();
            let scaled = (rest.iter().map(|v| v / s).collect::<Vec<_>>(), poly.b_vec[i] / s);
            if coef > 0.0 {
                positive.push(scaled);
            } else {
                negative.push(scaled);
            }
        }
    }
    let rows = positive.len() * negative.len() + zero.len();
    if rows > row_cap {
        return Err(Error::PolyhedronTooLarge {
            entries: rows,
            cap: row_cap,
        });
    }
    let mut out_rows: Vec<(Vec<f64>, f64)> = Vec::with_capacity(rows);
    for (pa, pb) in &positive {
        for (na, nb) in &negative {
            let a: Vec<f64> = pa.iter().zip(na).map(|(x, y)| x + y).collect();
            out_rows.push((a, pb + nb));
        }
    }
    out_rows.extend(zero);
    let a_mat = DMatrix::from_fn(out_rows.len(), keep.len(), |i, j| out_rows[i].0[j]);
    let b_vec = DVector::from_iterator(out_rows.len(), out_rows.iter().map(|r| r.1));
    Ok(Polyhedron { a_mat, b_vec })
}

/// Bounds of one selected coefficient given the observed values of the
/// coefficients before it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoordinateBounds {
    /// Column index of the coefficient.
    pub coefficient: usize,
    pub lower: f64,
    pub upper: f64,
    pub observed: f64,
}

/// Sequential truncation bounds for the selected coefficients t = Vᵀy.
///
/// With C = ΣV(VᵀΣV)⁻¹ and Z* = (I − CVᵀ)y, the selection event is
/// ΓC t ≥ −ΓZ*. Coordinates are the selected columns in increasing order;
/// the bounds for coordinate k come from eliminating coordinates after k
/// and fixing coordinates before k at their observed values.
pub fn truncation_region_sequence(
    path: &SelectionPath,
    model: &GaussianModel,
    y: &DVector<f64>,
) -> Result<Vec<CoordinateBounds>> {
    let active = path.active_set();
    if active.is_empty() {
        return Ok(Vec::new());
    }
    let k = active.len();
    let v = path.v.select_columns(&active);
    let sv = &model.sigma * &v;
    let vsv = v.tr_mul(&sv);
    let chol = vsv
        .clone()
        .cholesky()
        .ok_or_else(|| Error::DegenerateContrast(vsv.determinant()))?;
    let c = chol.solve(&sv.transpose()).transpose();
    let t = v.tr_mul(y);
    let z_star = y - &c * &t;
    let base = Polyhedron::new(&path.gamma * &c, -(&path.gamma * z_star))?.prune();

    let mut chain = vec![base];
    for var in (1..k).rev() {
        let next = fourier_motzkin_eliminate(chain.last().expect("chain is non-empty"), var)?.prune();
        chain.push(next);
    }
    chain.reverse();
    // chain[i] now involves coordinates 0..=i
    let mut out = Vec::with_capacity(k);
    for (i, poly) in chain.iter().enumerate() {
        let mut x = DVector::zeros(i + 1);
        x.rows_mut(0, i).copy_from(&t.rows(0, i));
        let (lower, upper) = poly
            .interval(i, &x, 1e-9)
            .ok_or_else(|| Error::InvalidInput("observed coefficients violate their own selection region".into()))?;
        out.push(CoordinateBounds {
            coefficient: active[i],
            lower,
            upper,
            observed: t[i],
        });
    }
    Ok(out)
}
