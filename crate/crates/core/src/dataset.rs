//! Study containers, standardization and basis expansion.
//!
//! Raw predictors are expanded with one-dimensional basis functions (linear
//! terms or truncated-power cubic splines), and the expanded columns are then
//! centered and scaled to unit ℓ2 norm. Outcomes are centered. The centering
//! and scaling constants are kept so the same transform can be applied to new
//! rows at prediction time.
//!
//! The merged learner standardizes on the stacked training rows; each
//! ensemble member standardizes on its own rows.

use std::ops::Range;

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used to decide a column or outcome has zero variance.
const ZERO_VARIANCE_TOL: f64 = 1e-14;

/// One study: raw predictors and outcome, plus the standardization state.
#[derive(Debug, Clone)]
pub struct Study {
    pub id: String,
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    standardization: Option<Standardization>,
}

/// Constants produced by [`standardize`].
#[derive(Debug, Clone, PartialEq)]
pub struct Standardization {
    pub y_center: f64,
    pub columns: ColumnScaling,
}

impl Study {
    pub fn new(id: impl Into<String>, x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        let id = id.into();
        if x.nrows() != y.len() {
            return Err(Error::DimensionMismatch(format!(
                "study '{id}': x has {} rows but y has {} entries",
                x.nrows(),
                y.len()
            )));
        }
        if x.nrows() < 2 {
            return Err(Error::InvalidInput(format!(
                "study '{id}' needs at least 2 observations"
            )));
        }
        if x.ncols() < 1 {
            return Err(Error::InvalidInput(format!(
                "study '{id}' needs at least one predictor"
            )));
        }
        Ok(Self {
            id,
            x,
            y,
            standardization: None,
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn is_standardized(&self) -> bool {
        self.standardization.is_some()
    }

    pub fn standardization(&self) -> Option<&Standardization> {
        self.standardization.as_ref()
    }
}

/// Per-column centering and scaling constants.
///
/// A scale of zero marks a constant column; it is mapped to all zeros.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnScaling {
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
}

impl ColumnScaling {
    /// Fits centering constants and unit-ℓ2-norm scales on `raw`.
    /// Returns the indices of constant columns alongside.
    pub fn fit(raw: &DMatrix<f64>) -> (Self, Vec<usize>) {
        let n = raw.nrows() as f64;
        let mut center = Vec::with_capacity(raw.ncols());
        let mut scale = Vec::with_capacity(raw.ncols());
        let mut constant = Vec::new();
        for (j, col) in raw.column_iter().enumerate() {
            let mean = col.sum() / n;
            let ss: f64 = col.iter().map(|v| (v - mean) * (v - mean)).sum();
            let norm = ss.sqrt();
            let magnitude = col.iter().fold(0.0_f64, |acc, v| acc.max(v.abs())).max(1.0);
            center.push(mean);
            if norm <= ZERO_VARIANCE_TOL * magnitude * n.sqrt() {
                scale.push(0.0);
                constant.push(j);
            } else {
                scale.push(norm);
            }
        }
        (Self { center, scale }, constant)
    }

    pub fn identity(p: usize) -> Self {
        Self {
            center: vec![0.0; p],
            scale: vec![1.0; p],
        }
    }

    pub fn apply(&self, raw: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = raw.clone();
        for (j, mut col) in out.column_iter_mut().enumerate() {
            let s = self.scale[j];
            if s == 0.0 {
                col.fill(0.0);
            } else {
                let c = self.center[j];
                col.apply(|v| *v = (*v - c) / s);
            }
        }
        out
    }
}

/// Centers `y` and standardizes the raw predictor columns of a study.
///
/// Constant predictor columns are kept as all-zero columns and reported
/// through the log.
pub fn standardize(study: &Study) -> Result<Study> {
    if study.is_standardized() {
        return Err(Error::AlreadyStandardized(study.id.clone()));
    }
    let (y_centered, y_center) = center_outcome(&study.id, &study.y)?;
    let (columns, constant) = ColumnScaling::fit(&study.x);
    for j in &constant {
        warn!("study '{}': predictor column {j} is constant; set to zero", study.id);
    }
    Ok(Study {
        id: study.id.clone(),
        x: columns.apply(&study.x),
        y: y_centered,
        standardization: Some(Standardization { y_center, columns }),
    })
}

fn center_outcome(id: &str, y: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
    let mean = y.mean();
    let centered = y.map(|v| v - mean);
    let magnitude = y.amax().max(1.0);
    if centered.norm() <= ZERO_VARIANCE_TOL * magnitude * (y.len() as f64).sqrt() {
        return Err(Error::DegenerateOutcome(id.to_string()));
    }
    Ok((centered, mean))
}

/// K training and V test studies over the same predictors.
#[derive(Debug, Clone)]
pub struct MultiStudyDataset {
    pub predictor_names: Vec<String>,
    pub training: Vec<Study>,
    pub test: Vec<Study>,
}

impl MultiStudyDataset {
    pub fn new(predictor_names: Vec<String>, training: Vec<Study>, test: Vec<Study>) -> Result<Self> {
        if training.is_empty() {
            return Err(Error::InvalidInput("at least one training study is required".into()));
        }
        let p = predictor_names.len();
        for s in training.iter().chain(test.iter()) {
            if s.p() != p {
                return Err(Error::DimensionMismatch(format!(
                    "study '{}' has {} predictors, expected {p}",
                    s.id,
                    s.p()
                )));
            }
        }
        Ok(Self {
            predictor_names,
            training,
            test,
        })
    }

    pub fn k(&self) -> usize {
        self.training.len()
    }

    pub fn v(&self) -> usize {
        self.test.len()
    }

    /// Total number of training observations.
    pub fn n_train(&self) -> usize {
        self.training.iter().map(Study::n).sum()
    }

    pub fn n_test(&self) -> usize {
        self.test.iter().map(Study::n).sum()
    }

    pub fn p(&self) -> usize {
        self.predictor_names.len()
    }
}

/// How a single predictor is expanded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BasisTerm {
    Linear,
    /// x, x², x³ and (x − ξ)³₊ for every knot ξ.
    TruncatedPowerCubic {
        knots: Vec<f64>,
    },
}

impl BasisTerm {
    pub fn width(&self) -> usize {
        match self {
            BasisTerm::Linear => 1,
            BasisTerm::TruncatedPowerCubic { knots } => 3 + knots.len(),
        }
    }

    fn push_values(&self, x: f64, out: &mut Vec<f64>) {
        match self {
            BasisTerm::Linear => out.push(x),
            BasisTerm::TruncatedPowerCubic { knots } => {
                out.push(x);
                out.push(x * x);
                out.push(x * x * x);
                for &k in knots {
                    let d = x - k;
                    out.push(if d > 0.0 { d * d * d } else { 0.0 });
                }
            }
        }
    }
}

/// Per-predictor basis plan; expanded width is the sum of term widths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub terms: Vec<BasisTerm>,
}

/// Where an expanded column came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSource {
    pub predictor: usize,
    pub basis_index: usize,
}

impl BasisSpec {
    pub fn new(terms: Vec<BasisTerm>) -> Result<Self> {
        for (p, term) in terms.iter().enumerate() {
            if let BasisTerm::TruncatedPowerCubic { knots } = term {
                if knots.iter().any(|k| !k.is_finite()) {
                    return Err(Error::InvalidInput(format!("predictor {p}: knots must be finite")));
                }
                if knots.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::InvalidInput(format!(
                        "predictor {p}: knots must be strictly increasing"
                    )));
                }
            }
        }
        Ok(Self { terms })
    }

    pub fn all_linear(p: usize) -> Self {
        Self {
            terms: vec![BasisTerm::Linear; p],
        }
    }

    /// Expanded width P.
    pub fn width(&self) -> usize {
        self.terms.iter().map(BasisTerm::width).sum()
    }

    pub fn column_map(&self) -> Vec<ColumnSource> {
        self.terms
            .iter()
            .enumerate()
            .flat_map(|(predictor, t)| (0..t.width()).map(move |basis_index| ColumnSource { predictor, basis_index }))
            .collect()
    }

    /// Index of the first expanded column belonging to `predictor`.
    pub fn first_column_of(&self, predictor: usize) -> Option<usize> {
        if predictor >= self.terms.len() {
            return None;
        }
        Some(self.terms[..predictor].iter().map(BasisTerm::width).sum())
    }

    /// Basis values for one row of raw predictors.
    pub fn evaluate_row(&self, row: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.width());
        for (term, &x) in self.terms.iter().zip(row) {
            term.push_values(x, &mut out);
        }
        out
    }

    /// Raw (unstandardized) expanded matrix for a predictor matrix.
    pub fn evaluate(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.terms.len() {
            return Err(Error::DimensionMismatch(format!(
                "basis spec has {} entries but data has {} predictors",
                self.terms.len(),
                x.ncols()
            )));
        }
        let width = self.width();
        let mut out = DMatrix::zeros(x.nrows(), width);
        let mut row = vec![0.0; x.ncols()];
        for i in 0..x.nrows() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = x[(i, j)];
            }
            let vals = self.evaluate_row(&row);
            for (j, v) in vals.into_iter().enumerate() {
                out[(i, j)] = v;
            }
        }
        Ok(out)
    }

    fn warn_knots_outside(&self, x: &DMatrix<f64>) {
        for (p, term) in self.terms.iter().enumerate() {
            if let BasisTerm::TruncatedPowerCubic { knots } = term {
                let col = x.column(p);
                let (lo, hi) = (col.min(), col.max());
                for &k in knots {
                    if k < lo || k > hi {
                        warn!("knot {k} for predictor {p} lies outside the observed range [{lo}, {hi}]");
                    }
                }
            }
        }
    }
}

/// Standardized expanded design X̃ with the bookkeeping to reproduce it.
#[derive(Debug, Clone)]
pub struct ExpandedMatrix {
    /// N × P standardized design.
    pub xt: DMatrix<f64>,
    /// N × P basis values before standardization.
    pub raw: DMatrix<f64>,
    pub column_map: Vec<ColumnSource>,
    /// Columns of X̃ carrying random effects (defines Z, length Q).
    pub random_effect_columns: Vec<usize>,
    pub scaling: ColumnScaling,
    /// Row ranges of the contributing studies, in input order.
    pub study_rows: Vec<Range<usize>>,
}

impl ExpandedMatrix {
    pub fn n(&self) -> usize {
        self.xt.nrows()
    }

    pub fn p(&self) -> usize {
        self.xt.ncols()
    }

    /// Applies this design's standardization to raw basis rows of new data.
    pub fn transform(&self, raw: &DMatrix<f64>) -> DMatrix<f64> {
        self.scaling.apply(raw)
    }

    /// Z: the raw random-effect columns.
    pub fn z_raw(&self) -> DMatrix<f64> {
        self.raw.select_columns(&self.random_effect_columns)
    }
}

/// Expanded design plus centered outcome for one fitting unit (a study or
/// the merged stack).
#[derive(Debug, Clone)]
pub struct DesignData {
    pub id: String,
    pub design: ExpandedMatrix,
    /// Centered outcome.
    pub y: DVector<f64>,
    /// Outcome before centering.
    pub y_raw: DVector<f64>,
    pub y_center: f64,
}

impl DesignData {
    /// Predicts raw outcomes for raw basis rows using coefficients fit on
    /// this unit's standardized scale.
    pub fn predict(&self, coefficients: &DVector<f64>, raw_basis: &DMatrix<f64>) -> DVector<f64> {
        let mut pred = self.design.transform(raw_basis) * coefficients;
        pred.add_scalar_mut(self.y_center);
        pred
    }
}

/// Raw expanded data of a test study.
#[derive(Debug, Clone)]
pub struct RawExpandedStudy {
    pub id: String,
    pub raw: DMatrix<f64>,
    pub y: DVector<f64>,
}

/// Result of [`expand_basis`].
#[derive(Debug, Clone)]
pub struct ExpandedDataset {
    pub spec: BasisSpec,
    /// Training studies, each standardized on its own rows.
    pub studies: Vec<DesignData>,
    /// Training studies stacked in input order, standardized on the stack.
    pub merged: DesignData,
    pub test: Vec<RawExpandedStudy>,
}

impl ExpandedDataset {
    pub fn p(&self) -> usize {
        self.spec.width()
    }

    pub fn k(&self) -> usize {
        self.studies.len()
    }
}

/// Whether expanded columns are standardized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scaling {
    #[default]
    Standardize,
    /// Keep raw basis values and raw outcomes (consistency checks only).
    None,
}

/// Expands every study with `spec`, standardizes the expanded columns and
/// centers outcomes. `random_effect_columns` index expanded columns.
///
/// Studies may be raw or already standardized; the basis functions are
/// evaluated on whatever values `x` holds.
pub fn expand_basis(
    dataset: &MultiStudyDataset,
    spec: &BasisSpec,
    random_effect_columns: &[usize],
    scaling: Scaling,
) -> Result<ExpandedDataset> {
    if spec.terms.len() != dataset.p() {
        return Err(Error::DimensionMismatch(format!(
            "basis spec has {} entries but the dataset has {} predictors",
            spec.terms.len(),
            dataset.p()
        )));
    }
    let width = spec.width();
    let mut seen = vec![false; width];
    for &c in random_effect_columns {
        if c >= width {
            return Err(Error::InvalidInput(format!(
                "random-effect column {c} out of range (P = {width})"
            )));
        }
        if std::mem::replace(&mut seen[c], true) {
            return Err(Error::InvalidInput(format!("random-effect column {c} listed twice")));
        }
    }

    let column_map = spec.column_map();
    let mut raw_blocks = Vec::with_capacity(dataset.k());
    for s in &dataset.training {
        spec.warn_knots_outside(&s.x);
        raw_blocks.push(spec.evaluate(&s.x)?);
    }

    let studies = dataset
        .training
        .iter()
        .zip(&raw_blocks)
        .map(|(s, raw)| {
            design_unit(
                &s.id,
                raw.clone(),
                s.y.clone(),
                std::iter::once(0..s.n()).collect(),
                column_map.clone(),
                random_effect_columns,
                scaling,
            )
        })
        .collect::<Result<Vec<_>>>()?;

    let n_total = dataset.n_train();
    let mut stacked = DMatrix::zeros(n_total, width);
    let mut y_stacked = DVector::zeros(n_total);
    let mut rows = Vec::with_capacity(dataset.k());
    let mut offset = 0;
    for (s, raw) in dataset.training.iter().zip(&raw_blocks) {
        stacked.rows_mut(offset, s.n()).copy_from(raw);
        y_stacked.rows_mut(offset, s.n()).copy_from(&s.y);
        rows.push(offset..offset + s.n());
        offset += s.n();
    }
    let merged = design_unit(
        "merged",
        stacked,
        y_stacked,
        rows,
        column_map,
        random_effect_columns,
        scaling,
    )?;

    let test = dataset
        .test
        .iter()
        .map(|s| {
            Ok(RawExpandedStudy {
                id: s.id.clone(),
                raw: spec.evaluate(&s.x)?,
                y: s.y.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(ExpandedDataset {
        spec: spec.clone(),
        studies,
        merged,
        test,
    })
}

fn design_unit(
    id: &str,
    raw: DMatrix<f64>,
    y: DVector<f64>,
    study_rows: Vec<Range<usize>>,
    column_map: Vec<ColumnSource>,
    random_effect_columns: &[usize],
    scaling: Scaling,
) -> Result<DesignData> {
    let (columns, y_c, y_center) = match scaling {
        Scaling::Standardize => {
            let (columns, constant) = ColumnScaling::fit(&raw);
            for j in &constant {
                warn!("'{id}': expanded column {j} is constant; set to zero");
            }
            let (y_c, y_center) = center_outcome(id, &y)?;
            (columns, y_c, y_center)
        }
        Scaling::None => (ColumnScaling::identity(raw.ncols()), y.clone(), 0.0),
    };
    let xt = columns.apply(&raw);
    Ok(DesignData {
        id: id.to_string(),
        design: ExpandedMatrix {
            xt,
            raw,
            column_map,
            random_effect_columns: random_effect_columns.to_vec(),
            scaling: columns,
            study_rows,
        },
        y: y_c,
        y_raw: y,
        y_center,
    })
}

/// [`expand_basis`] with standardization.
pub fn expand(
    dataset: &MultiStudyDataset,
    spec: &BasisSpec,
    random_effect_columns: &[usize],
) -> Result<ExpandedDataset> {
    expand_basis(dataset, spec, random_effect_columns, Scaling::Standardize)
}
