//! Mixed-effects data generation:
//! Y_ik = f(X_ik) + Z_ik γ_k + ε_ik, γ_k ~ N(0, G), ε_ik ~ N(0, σε²),
//! where Z_ik holds a subset of the raw predictors.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{BasisSpec, BasisTerm, MultiStudyDataset, Study};
use crate::error::{Error, Result};

/// Coefficients of the default mean function: four spline terms for the
/// first predictor followed by linear terms for predictors 2 to 10.
pub const DEFAULT_COEFFICIENTS: [f64; 13] = [
    -0.28, -0.12, -0.78, 0.035, -0.23, 1.56, -0.0056, 0.13, 0.0013, -0.00071, -0.0023, -0.69, 0.016,
];

/// Zero-based predictors carrying random effects in the default design.
pub const DEFAULT_RANDOM_EFFECT_PREDICTORS: [usize; 5] = [2, 3, 4, 5, 6];

/// f(x) = basis(x)ᵀ coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanFunction {
    pub basis: BasisSpec,
    pub coefficients: Vec<f64>,
}

impl MeanFunction {
    pub fn new(basis: BasisSpec, coefficients: Vec<f64>) -> Result<Self> {
        if basis.width() != coefficients.len() {
            return Err(Error::DimensionMismatch(format!(
                "basis has width {} but {} coefficients were given",
                basis.width(),
                coefficients.len()
            )));
        }
        Ok(Self { basis, coefficients })
    }

    /// Ten predictors; the first expanded with a cubic spline with a knot at 0.
    pub fn default_design() -> Self {
        let mut terms = vec![BasisTerm::TruncatedPowerCubic { knots: vec![0.0] }];
        terms.extend(std::iter::repeat_n(BasisTerm::Linear, 9));
        Self {
            basis: BasisSpec { terms },
            coefficients: DEFAULT_COEFFICIENTS.to_vec(),
        }
    }

    /// Number of raw predictors.
    pub fn p(&self) -> usize {
        self.basis.terms.len()
    }

    pub fn evaluate(&self, x: &DMatrix<f64>) -> Result<DVector<f64>> {
        Ok(self.basis.evaluate(x)? * DVector::from_column_slice(&self.coefficients))
    }
}

/// Where predictor rows come from.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PredictorSource {
    /// Independent standard normal entries.
    #[default]
    GaussianIid,
    /// Rows sampled without replacement from a numeric CSV with a header.
    FromCsv { path: PathBuf },
}

/// Design of a simulated multi-study collection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub k_train: usize,
    pub v_test: usize,
    pub n_per_study: usize,
    pub mean_function: MeanFunction,
    /// Zero-based raw predictors forming Z.
    pub random_effect_predictors: Vec<usize>,
    /// Diagonal of G.
    pub g_diag: Vec<f64>,
    pub sigma_eps2: f64,
    pub predictor_source: PredictorSource,
    pub seed: u64,
}

impl GeneratorSpec {
    /// K = V = 4 studies of 100 rows, σε² = 1, G = 0.
    pub fn default_design(seed: u64) -> Self {
        Self {
            k_train: 4,
            v_test: 4,
            n_per_study: 100,
            mean_function: MeanFunction::default_design(),
            random_effect_predictors: DEFAULT_RANDOM_EFFECT_PREDICTORS.to_vec(),
            g_diag: vec![0.0; DEFAULT_RANDOM_EFFECT_PREDICTORS.len()],
            sigma_eps2: 1.0,
            predictor_source: PredictorSource::GaussianIid,
            seed,
        }
    }

    pub fn q(&self) -> usize {
        self.random_effect_predictors.len()
    }

    /// Expanded columns holding the raw random-effect predictors.
    pub fn random_effect_columns(&self) -> Vec<usize> {
        self.random_effect_predictors
            .iter()
            .filter_map(|&p| self.mean_function.basis.first_column_of(p))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_train < 1 {
            return Err(Error::InvalidInput("k_train must be at least 1".into()));
        }
        if self.n_per_study < 2 {
            return Err(Error::InvalidInput("n_per_study must be at least 2".into()));
        }
        if !(self.sigma_eps2 >= 0.0) {
            return Err(Error::InvalidInput("sigma_eps2 must be nonnegative".into()));
        }
        if self.g_diag.len() != self.q() {
            return Err(Error::DimensionMismatch(format!(
                "{} random-effect predictors but g_diag has {} entries",
                self.q(),
                self.g_diag.len()
            )));
        }
        if self.g_diag.iter().any(|g| !(*g >= 0.0)) {
            return Err(Error::InvalidInput("g_diag entries must be nonnegative".into()));
        }
        let p = self.mean_function.p();
        let mut seen = vec![false; p];
        for &r in &self.random_effect_predictors {
            if r >= p || std::mem::replace(&mut seen[r], true) {
                return Err(Error::InvalidInput(format!(
                    "random-effect predictor {r} is out of range or repeated (p = {p})"
                )));
            }
        }
        Ok(())
    }
}

/// Predictor sampler resolved from a [`PredictorSource`].
#[derive(Debug, Clone)]
pub enum PredictorSampler {
    Gaussian { p: usize },
    Pool(DMatrix<f64>),
}

impl PredictorSampler {
    pub fn from_source(source: &PredictorSource, p: usize) -> Result<Self> {
        match source {
            PredictorSource::GaussianIid => Ok(Self::Gaussian { p }),
            PredictorSource::FromCsv { path } => {
                let pool = read_predictor_pool(path)?;
                if pool.ncols() != p {
                    return Err(Error::DimensionMismatch(format!(
                        "{} has {} columns, the mean function needs {p}",
                        path.display(),
                        pool.ncols()
                    )));
                }
                Ok(Self::Pool(pool))
            }
        }
    }

    /// One predictor matrix per entry of `sizes`. Pool rows are drawn
    /// without replacement across all blocks.
    pub fn draw<R: Rng + ?Sized>(&self, sizes: &[usize], rng: &mut R) -> Result<Vec<DMatrix<f64>>> {
        match self {
            Self::Gaussian { p } => Ok(sizes
                .iter()
                .map(|&n| DMatrix::from_fn(n, *p, |_, _| rng.sample::<f64, _>(StandardNormal)))
                .collect()),
            Self::Pool(pool) => {
                let total: usize = sizes.iter().sum();
                if total > pool.nrows() {
                    return Err(Error::InvalidInput(format!(
                        "predictor pool has {} rows, {total} are needed",
                        pool.nrows()
                    )));
                }
                let idx = sample(rng, pool.nrows(), total).into_vec();
                let mut out = Vec::with_capacity(sizes.len());
                let mut offset = 0;
                for &n in sizes {
                    out.push(pool.select_rows(&idx[offset..offset + n]));
                    offset += n;
                }
                Ok(out)
            }
        }
    }
}

/// Reads every column of a numeric CSV with a header row.
pub fn read_predictor_pool(path: &Path) -> Result<DMatrix<f64>> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let ncols = headers.len();
    let mut values = Vec::new();
    let mut rows = 0;
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        for (c, field) in record.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| Error::MissingValue {
                source_name: path.display().to_string(),
                row: r + 1,
                column: headers.get(c).unwrap_or("").to_string(),
            })?;
            if !v.is_finite() {
                return Err(Error::MissingValue {
                    source_name: path.display().to_string(),
                    row: r + 1,
                    column: headers.get(c).unwrap_or("").to_string(),
                });
            }
            values.push(v);
        }
        rows += 1;
    }
    Ok(DMatrix::from_row_slice(rows, ncols, &values))
}

/// Raw predictors of every study in a collection.
#[derive(Debug, Clone)]
pub struct PredictorDraw {
    pub train: Vec<DMatrix<f64>>,
    pub test: Vec<DMatrix<f64>>,
}

impl PredictorDraw {
    pub fn draw<R: Rng + ?Sized>(spec: &GeneratorSpec, sampler: &PredictorSampler, rng: &mut R) -> Result<Self> {
        let sizes = vec![spec.n_per_study; spec.k_train + spec.v_test];
        let mut all = sampler.draw(&sizes, rng)?;
        let test = all.split_off(spec.k_train);
        Ok(Self { train: all, test })
    }
}

/// A simulated collection with the quantities needed for oracle checks.
#[derive(Debug, Clone)]
pub struct GeneratedData {
    pub dataset: MultiStudyDataset,
    pub f_train: Vec<DVector<f64>>,
    pub f_test: Vec<DVector<f64>>,
    pub gamma_train: Vec<DVector<f64>>,
    pub gamma_test: Vec<DVector<f64>>,
    pub z_train: Vec<DMatrix<f64>>,
    pub z_test: Vec<DMatrix<f64>>,
}

fn predictor_names(p: usize) -> Vec<String> {
    (1..=p).map(|i| format!("x{i}")).collect()
}

/// A study with its mean vector, random effects and Z block.
type StudyParts = (Study, DVector<f64>, DVector<f64>, DMatrix<f64>);

/// Draws outcomes for fixed predictors.
pub fn draw_outcomes<R: Rng + ?Sized>(
    spec: &GeneratorSpec,
    predictors: &PredictorDraw,
    g_diag: &[f64],
    rng: &mut R,
) -> Result<GeneratedData> {
    if g_diag.len() != spec.q() {
        return Err(Error::DimensionMismatch(format!(
            "g_diag has {} entries, expected {}",
            g_diag.len(),
            spec.q()
        )));
    }
    let sd_eps = spec.sigma_eps2.sqrt();
    let sd_g: Vec<f64> = g_diag.iter().map(|g| g.sqrt()).collect();
    let mut one = |prefix: &str, i: usize, x: &DMatrix<f64>| -> Result<_> {
        let f = spec.mean_function.evaluate(x)?;
        let z = x.select_columns(&spec.random_effect_predictors);
        let gamma = DVector::from_fn(sd_g.len(), |q, _| sd_g[q] * rng.sample::<f64, _>(StandardNormal));
        let eps = DVector::from_fn(x.nrows(), |_, _| sd_eps * rng.sample::<f64, _>(StandardNormal));
        let y = &f + &z * &gamma + eps;
        let study = Study::new(format!("{prefix}_{}", i + 1), x.clone(), y)?;
        Ok((study, f, gamma, z))
    };
    let mut train = Vec::new();
    for (i, x) in predictors.train.iter().enumerate() {
        train.push(one("train", i, x)?);
    }
    let mut test = Vec::new();
    for (i, x) in predictors.test.iter().enumerate() {
        test.push(one("test", i, x)?);
    }
    let split = |parts: Vec<StudyParts>| {
        let mut studies = Vec::new();
        let mut fs = Vec::new();
        let mut gs = Vec::new();
        let mut zs = Vec::new();
        for (s, f, g, z) in parts {
            studies.push(s);
            fs.push(f);
            gs.push(g);
            zs.push(z);
        }
        (studies, fs, gs, zs)
    };
    let (train_studies, f_train, gamma_train, z_train) = split(train);
    let (test_studies, f_test, gamma_test, z_test) = split(test);
    Ok(GeneratedData {
        dataset: MultiStudyDataset::new(predictor_names(spec.mean_function.p()), train_studies, test_studies)?,
        f_train,
        f_test,
        gamma_train,
        gamma_test,
        z_train,
        z_test,
    })
}

/// Generates a full collection from the spec's own seed and G.
pub fn generate(spec: &GeneratorSpec) -> Result<GeneratedData> {
    spec.validate()?;
    let sampler = PredictorSampler::from_source(&spec.predictor_source, spec.mean_function.p())?;
    let mut rng = super::seed::rng_for(spec.seed, &[super::seed::PREDICTOR_STREAM]);
    let predictors = PredictorDraw::draw(spec, &sampler, &mut rng)?;
    let mut rng = super::seed::rng_for(spec.seed, &[super::seed::OUTCOME_STREAM]);
    draw_outcomes(spec, &predictors, &spec.g_diag, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn noiseless_outcome_is_mean_function() {
        let mut spec = GeneratorSpec::default_design(3);
        spec.sigma_eps2 = 0.0;
        let data = generate(&spec).unwrap();
        for (s, f) in data.dataset.training.iter().zip(&data.f_train) {
            assert_eq!(&s.y, f);
        }
        assert_eq!(data.dataset.k(), 4);
        assert_eq!(data.dataset.v(), 4);
        assert_eq!(data.dataset.n_train(), 400);
    }

    #[test]
    fn default_mean_function_by_hand() {
        let mf = MeanFunction::default_design();
        let x = DMatrix::from_row_slice(
            2,
            10,
            &[
                0.5, 1.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, -2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0,
            ],
        );
        let f = mf.evaluate(&x).unwrap();
        let c = DEFAULT_COEFFICIENTS;
        let row0 = c[0] * 0.5 + c[1] * 0.25 + c[2] * 0.125 + c[3] * 0.125 + c[4] + c[5] * 2.0 - c[11];
        let row1 = c[0] * -2.0 + c[1] * 4.0 + c[2] * -8.0 + c[12];
        assert!((f[0] - row0).abs() < 1e-15);
        assert!((f[1] - row1).abs() < 1e-15);
    }

    #[test]
    fn random_effects_use_raw_predictors() {
        let mut spec = GeneratorSpec::default_design(5);
        spec.g_diag = vec![1.0; 5];
        spec.sigma_eps2 = 0.0;
        let data = generate(&spec).unwrap();
        for ((s, f), (g, z)) in data
            .dataset
            .training
            .iter()
            .zip(&data.f_train)
            .zip(data.gamma_train.iter().zip(&data.z_train))
        {
            assert_eq!(z, &s.x.columns(2, 5).into_owned());
            assert!((&s.y - f - z * g).amax() < 1e-12);
        }
        assert_eq!(spec.random_effect_columns(), vec![5, 6, 7, 8, 9]);
    }

    #[test]
    fn same_seed_is_bitwise_identical() {
        let mut spec = GeneratorSpec::default_design(9);
        spec.g_diag = vec![0.3; 5];
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        for (sa, sb) in a.dataset.training.iter().zip(&b.dataset.training) {
            assert!(sa.y.iter().zip(sb.y.iter()).all(|(u, v)| u.to_bits() == v.to_bits()));
            assert!(sa.x.iter().zip(sb.x.iter()).all(|(u, v)| u.to_bits() == v.to_bits()));
        }
    }

    #[test]
    fn csv_pool_too_small_is_rejected() {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        writeln!(file, "a,b").unwrap();
        for i in 0..5 {
            writeln!(file, "{i},{}", i * 2).unwrap();
        }
        let sampler = PredictorSampler::from_source(
            &PredictorSource::FromCsv {
                path: file.path().to_path_buf(),
            },
            2,
        )
        .unwrap();
        let mut rng = crate::sim::seed::rng_for(1, &[]);
        assert!(sampler.draw(&[3, 2], &mut rng).is_ok());
        assert!(matches!(sampler.draw(&[3, 3], &mut rng), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn invalid_specs() {
        let mut spec = GeneratorSpec::default_design(1);
        spec.k_train = 0;
        assert!(spec.validate().is_err());
        let mut spec = GeneratorSpec::default_design(1);
        spec.g_diag = vec![1.0];
        assert!(spec.validate().is_err());
        let mut spec = GeneratorSpec::default_design(1);
        spec.sigma_eps2 = -1.0;
        assert!(spec.validate().is_err());
    }
}
