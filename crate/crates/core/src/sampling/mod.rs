//! Subset selection from a candidate pool.
//!
//! A design is an ordered set of distinct pool row indices. Selection
//! strategies live in submodules: exchange optimization of an information
//! criterion, Kennard-Stone coverage, k-means representatives and uniform
//! random draws. This module holds the shared types, the information-matrix
//! criteria, distance helpers and the on-disk design format.

mod fedorov;
mod kennard_stone;
mod kmeans;

pub use fedorov::{fedorov_augment, fedorov_exchange};
pub use kennard_stone::kennard_stone;
pub use kmeans::{kmeans_fit, kmeans_sample, KMeansFit};

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write as _};
use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::FeatureMatrix;
use crate::error::{Error, Result};
use crate::seed::seeded_rng;

/// Information-based objective for exchange optimization. All three are
/// oriented so that larger is better.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Criterion {
    /// log det(M + delta I)
    D,
    /// -trace((M + delta I)^-1)
    A,
    /// Negated average prediction variance over the pool.
    I,
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Criterion::D => "D",
            Criterion::A => "A",
            Criterion::I => "I",
        })
    }
}

/// Distance used by geometry-driven samplers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMetric {
    Euclidean,
    Mahalanobis,
}

impl fmt::Display for DistanceMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DistanceMetric::Euclidean => "euclidean",
            DistanceMetric::Mahalanobis => "mahalanobis",
        })
    }
}

/// Knobs shared by all samplers. Each algorithm reads the fields that apply
/// to it and ignores the rest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub criterion: Criterion,
    pub restarts: usize,
    pub max_exchange_passes: usize,
    pub ridge_delta: f64,
    pub seed: u64,
    pub distance: DistanceMetric,
    pub covariance_shrinkage: f64,
    pub kmeans_max_iters: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            criterion: Criterion::D,
            restarts: 10,
            max_exchange_passes: 100,
            ridge_delta: 1e-6,
            seed: 0,
            distance: DistanceMetric::Mahalanobis,
            covariance_shrinkage: 0.0,
            kmeans_max_iters: 300,
        }
    }
}

impl SamplerConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 {
            return Err(Error::Validation("restarts must be at least 1".into()));
        }
        if self.max_exchange_passes == 0 {
            return Err(Error::Validation("max_exchange_passes must be at least 1".into()));
        }
        if !self.ridge_delta.is_finite() || self.ridge_delta <= 0.0 {
            return Err(Error::Validation(format!(
                "ridge_delta must be finite and positive, got {}",
                self.ridge_delta
            )));
        }
        if !self.covariance_shrinkage.is_finite() || self.covariance_shrinkage < 0.0 {
            return Err(Error::Validation(format!(
                "covariance_shrinkage must be finite and non-negative, got {}",
                self.covariance_shrinkage
            )));
        }
        if self.kmeans_max_iters == 0 {
            return Err(Error::Validation("kmeans_max_iters must be at least 1".into()));
        }
        Ok(())
    }
}

/// A selection of distinct pool rows, tagged with a fingerprint of the pool
/// it came from so cross-pool comparisons fail loudly.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pool_ref: String,
    indices: Vec<usize>,
    criterion_value: Option<f64>,
}

impl Design {
    /// Validates indices against the pool: non-empty, in bounds, distinct.
    pub fn new(pool: &FeatureMatrix, indices: Vec<usize>) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::Size("a design needs at least one row".into()));
        }
        let n = pool.n();
        let mut seen = HashSet::with_capacity(indices.len());
        for &i in &indices {
            if i >= n {
                return Err(Error::Validation(format!(
                    "design index {i} out of bounds for pool of {n} rows"
                )));
            }
            if !seen.insert(i) {
                return Err(Error::Validation(format!("design index {i} repeated")));
            }
        }
        Ok(Design {
            pool_ref: pool.fingerprint(),
            indices,
            criterion_value: None,
        })
    }

    pub(crate) fn with_criterion_value(mut self, value: Option<f64>) -> Self {
        self.criterion_value = value;
        self
    }

    pub fn m(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// Final objective value, present for criterion-driven samplers.
    pub fn criterion_value(&self) -> Option<f64> {
        self.criterion_value
    }

    pub fn pool_ref(&self) -> &str {
        &self.pool_ref
    }

    /// Checks that `pool` is the matrix this design was selected from.
    pub fn check_pool(&self, pool: &FeatureMatrix) -> Result<()> {
        if self.pool_ref != pool.fingerprint() {
            return Err(Error::PoolMismatch(format!(
                "design was selected from pool {} but got pool {}",
                self.pool_ref,
                pool.fingerprint()
            )));
        }
        Ok(())
    }

    /// Row ids of the selected rows, in design order.
    pub fn row_ids(&self, pool: &FeatureMatrix) -> Result<Vec<String>> {
        self.check_pool(pool)?;
        Ok(self.indices.iter().map(|&i| pool.id(i).to_string()).collect())
    }
}

/// Fraction of the smaller design retained by the larger one.
pub fn persistence(a: &Design, b: &Design) -> Result<f64> {
    if a.pool_ref != b.pool_ref {
        return Err(Error::PoolMismatch(
            "persistence compares designs over the same pool".into(),
        ));
    }
    if a.m() > b.m() {
        return Err(Error::Validation(format!(
            "persistence expects the smaller design first, got sizes {} and {}",
            a.m(),
            b.m()
        )));
    }
    let b_set: HashSet<usize> = b.indices.iter().copied().collect();
    let shared = a.indices.iter().filter(|i| b_set.contains(i)).count();
    Ok(shared as f64 / a.m() as f64)
}

/// Normalized second-moment matrix of a design, validated symmetric and
/// positive semidefinite up to roundoff.
#[derive(Debug, Clone, PartialEq)]
pub struct InformationMatrix {
    matrix: DMatrix<f64>,
}

impl InformationMatrix {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::Shape(format!(
                "information matrix must be square, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("information matrix has non-finite entries".into()));
        }
        let max_abs = matrix.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        let tol = 1e-12 * max_abs;
        for j in 0..matrix.ncols() {
            for i in j + 1..matrix.nrows() {
                if (matrix[(i, j)] - matrix[(j, i)]).abs() > tol {
                    return Err(Error::Validation(format!(
                        "information matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        let eigen = matrix.clone().symmetric_eigen();
        let spectral = eigen.eigenvalues.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        let min_eigen = eigen.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        if min_eigen < -1e-10 * spectral {
            return Err(Error::Validation(format!(
                "information matrix is not positive semidefinite (eigenvalue {min_eigen})"
            )));
        }
        Ok(InformationMatrix { matrix })
    }

    pub fn p(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }
}

/// Average outer product of the design rows: (1/m) X_design^T X_design.
pub fn information_matrix(pool: &FeatureMatrix, design: &Design) -> Result<InformationMatrix> {
    design.check_pool(pool)?;
    let p = pool.p();
    let mut matrix = DMatrix::<f64>::zeros(p, p);
    for &i in design.indices() {
        let row = pool.row(i);
        for j in 0..p {
            for k in j..p {
                matrix[(j, k)] += row[j] * row[k];
            }
        }
    }
    let scale = 1.0 / design.m() as f64;
    for j in 0..p {
        for k in j..p {
            matrix[(j, k)] *= scale;
            matrix[(k, j)] = matrix[(j, k)];
        }
    }
    InformationMatrix::new(matrix)
}

/// out = a * x for a symmetric matrix given as a DMatrix.
pub(crate) fn sym_matvec(a: &DMatrix<f64>, x: &[f64], out: &mut [f64]) {
    out.fill(0.0);
    for (k, &xk) in x.iter().enumerate() {
        for (o, &a_rk) in out.iter_mut().zip(a.column(k).iter()) {
            *o += a_rk * xk;
        }
    }
}

pub(crate) fn log_det_from_cholesky(chol: &Cholesky<f64, nalgebra::Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// Evaluates a design criterion on an information matrix. The I criterion
/// averages prediction variance over the candidate pool, so it needs `pool`.
pub fn design_criterion(
    info: &InformationMatrix,
    criterion: Criterion,
    ridge_delta: f64,
    pool: Option<&FeatureMatrix>,
) -> Result<f64> {
    if !ridge_delta.is_finite() || ridge_delta < 0.0 {
        return Err(Error::Validation(format!(
            "ridge_delta must be finite and non-negative, got {ridge_delta}"
        )));
    }
    let p = info.p();
    let mut a = info.matrix().clone();
    for j in 0..p {
        a[(j, j)] += ridge_delta;
    }
    let chol = Cholesky::new(a).ok_or_else(|| {
        Error::Numeric("regularized information matrix is not positive definite; increase ridge_delta".into())
    })?;

    let value = match criterion {
        Criterion::D => log_det_from_cholesky(&chol),
        Criterion::A => -chol.inverse().trace(),
        Criterion::I => {
            let pool = pool.ok_or_else(|| {
                Error::Validation("the I criterion needs the candidate pool".into())
            })?;
            if pool.p() != p {
                return Err(Error::Shape(format!(
                    "pool has {} features, information matrix has {p}",
                    pool.p()
                )));
            }
            let inverse = chol.inverse();
            let mut w = vec![0.0; p];
            let mut total = 0.0;
            for i in 0..pool.n() {
                let row = pool.row(i);
                sym_matvec(&inverse, row, &mut w);
                total += row.iter().zip(&w).map(|(x, wx)| x * wx).sum::<f64>();
            }
            -total / pool.n() as f64
        }
    };
    if !value.is_finite() {
        return Err(Error::Numeric(format!(
            "criterion {criterion} evaluated to a non-finite value"
        )));
    }
    Ok(value)
}

/// Sample covariance of the pool rows (n - 1 denominator; zero matrix for a
/// single row).
pub fn pool_covariance(pool: &FeatureMatrix) -> DMatrix<f64> {
    let n = pool.n();
    let p = pool.p();
    let mut means = vec![0.0; p];
    for i in 0..n {
        for (m, v) in means.iter_mut().zip(pool.row(i)) {
            *m += v;
        }
    }
    for m in &mut means {
        *m /= n as f64;
    }
    let mut cov = DMatrix::<f64>::zeros(p, p);
    if n < 2 {
        return cov;
    }
    for i in 0..n {
        let row = pool.row(i);
        for j in 0..p {
            let dj = row[j] - means[j];
            for k in j..p {
                cov[(j, k)] += dj * (row[k] - means[k]);
            }
        }
    }
    let scale = 1.0 / (n - 1) as f64;
    for j in 0..p {
        for k in j..p {
            cov[(j, k)] *= scale;
            cov[(k, j)] = cov[(j, k)];
        }
    }
    cov
}

/// Mahalanobis distance between two points under a shrunk covariance.
pub fn mahalanobis_distance(
    u: &[f64],
    v: &[f64],
    covariance: &DMatrix<f64>,
    shrinkage: f64,
) -> Result<f64> {
    let p = covariance.nrows();
    if covariance.ncols() != p {
        return Err(Error::Shape("covariance must be square".into()));
    }
    if u.len() != p || v.len() != p {
        return Err(Error::Shape(format!(
            "points of length {} and {} for covariance of size {p}",
            u.len(),
            v.len()
        )));
    }
    if !shrinkage.is_finite() || shrinkage < 0.0 {
        return Err(Error::Validation(format!(
            "shrinkage must be finite and non-negative, got {shrinkage}"
        )));
    }
    let mut a = covariance.clone();
    for j in 0..p {
        a[(j, j)] += shrinkage;
    }
    let chol = Cholesky::new(a).ok_or_else(|| {
        Error::Numeric("shrunk covariance is not positive definite; increase shrinkage".into())
    })?;
    let diff = DVector::from_iterator(p, u.iter().zip(v).map(|(a, b)| a - b));
    let solved = chol.solve(&diff);
    let squared = diff.dot(&solved);
    Ok(squared.max(0.0).sqrt())
}

/// Draws m distinct rows uniformly at random.
pub fn random_sample(pool: &FeatureMatrix, m: usize, seed: u64) -> Result<Design> {
    let n = pool.n();
    if m == 0 || m > n {
        return Err(Error::Size(format!(
            "random sample needs 1 <= m <= {n}, got {m}"
        )));
    }
    let mut rng = seeded_rng(seed);
    let indices = rand::seq::index::sample(&mut rng, n, m).into_vec();
    Design::new(pool, indices)
}

/// A design as written to disk: selected row ids plus a comment header
/// naming the algorithm, the size, the seed and (when present) the final
/// criterion value.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignFile {
    pub algorithm: String,
    pub m: usize,
    pub seed: u64,
    pub criterion_value: Option<f64>,
    pub row_ids: Vec<String>,
}

impl DesignFile {
    pub fn from_design(
        design: &Design,
        pool: &FeatureMatrix,
        algorithm: impl Into<String>,
        seed: u64,
    ) -> Result<DesignFile> {
        Ok(DesignFile {
            algorithm: algorithm.into(),
            m: design.m(),
            seed,
            criterion_value: design.criterion_value(),
            row_ids: design.row_ids(pool)?,
        })
    }

    /// Maps the stored row ids back onto a pool.
    pub fn resolve(&self, pool: &FeatureMatrix) -> Result<Design> {
        let indices = pool.indices_for_ids(&self.row_ids)?;
        Ok(Design::new(pool, indices)?.with_criterion_value(self.criterion_value))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut writer = BufWriter::new(file);
        let mut emit = |line: String| -> Result<()> {
            writer
                .write_all(line.as_bytes())
                .and_then(|()| writer.write_all(b"\n"))
                .map_err(|e| Error::io(path, e))
        };
        emit(format!("# algorithm: {}", self.algorithm))?;
        emit(format!("# m: {}", self.m))?;
        emit(format!("# seed: {}", self.seed))?;
        if let Some(value) = self.criterion_value {
            emit(format!("# criterion_value: {value}"))?;
        }
        for id in &self.row_ids {
            emit(id.clone())?;
        }
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<DesignFile> {
        let path = path.as_ref();
        let location = path.display().to_string();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;

        let mut algorithm = None;
        let mut m = None;
        let mut seed = None;
        let mut criterion_value = None;
        let mut row_ids = Vec::new();
        for line in BufReader::new(file).lines() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if let Some(comment) = trimmed.strip_prefix('#') {
                let Some((key, value)) = comment.split_once(':') else {
                    continue;
                };
                let value = value.trim();
                match key.trim() {
                    "algorithm" => algorithm = Some(value.to_string()),
                    "m" => {
                        m = Some(value.parse().map_err(|_| {
                            Error::schema(&location, format!("bad m '{value}'"))
                        })?)
                    }
                    "seed" => {
                        seed = Some(value.parse().map_err(|_| {
                            Error::schema(&location, format!("bad seed '{value}'"))
                        })?)
                    }
                    "criterion_value" => {
                        criterion_value = Some(value.parse().map_err(|_| {
                            Error::schema(&location, format!("bad criterion value '{value}'"))
                        })?)
                    }
                    _ => {}
                }
            } else {
                row_ids.push(trimmed.to_string());
            }
        }

        let algorithm =
            algorithm.ok_or_else(|| Error::schema(&location, "missing '# algorithm:' header"))?;
        let m = m.ok_or_else(|| Error::schema(&location, "missing '# m:' header"))?;
        let seed = seed.ok_or_else(|| Error::schema(&location, "missing '# seed:' header"))?;
        if row_ids.len() != m {
            return Err(Error::schema(
                &location,
                format!("header declares m={m} but {} ids follow", row_ids.len()),
            ));
        }
        Ok(DesignFile {
            algorithm,
            m,
            seed,
            criterion_value,
            row_ids,
        })
    }
}

pub(crate) fn squared_euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}
