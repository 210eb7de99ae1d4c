//! Python bindings for the poolsel toolkit. The module mirrors the Rust
//! workflow: `Dataset` wraps a labeled pool, `select` produces a `Design`,
//! `fit` trains a `Model`, and `simulate`/`summarize` run the resampling
//! comparison in memory.

use std::path::PathBuf;
use std::str::FromStr;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use poolsel::{
    fedorov_augment, fit_ridge, format_percent_table, generate_synthetic, load_dataset,
    run_simulation, write_dataset, Algorithm, Criterion, DesignFile, DistanceMetric, Error,
    LabeledDataset, RidgeModel, SamplerConfig, ScoreRange, SimulationPlan, SummaryRow,
    TrialResult,
};

fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn parse_algorithm(name: &str) -> PyResult<Algorithm> {
    Algorithm::from_str(name).map_err(to_py_err)
}

fn parse_criterion(name: &str) -> PyResult<Criterion> {
    match name {
        "D" | "d" => Ok(Criterion::D),
        "A" | "a" => Ok(Criterion::A),
        "I" | "i" => Ok(Criterion::I),
        other => Err(PyValueError::new_err(format!(
            "unknown criterion '{other}' (expected D, A or I)"
        ))),
    }
}

fn parse_distance(name: &str) -> PyResult<DistanceMetric> {
    match name {
        "euclidean" => Ok(DistanceMetric::Euclidean),
        "mahalanobis" => Ok(DistanceMetric::Mahalanobis),
        other => Err(PyValueError::new_err(format!(
            "unknown distance '{other}' (expected euclidean or mahalanobis)"
        ))),
    }
}

fn sampler_config(
    criterion: &str,
    distance: &str,
    restarts: usize,
    seed: u64,
) -> PyResult<SamplerConfig> {
    let config = SamplerConfig {
        criterion: parse_criterion(criterion)?,
        distance: parse_distance(distance)?,
        restarts,
        seed,
        ..SamplerConfig::default()
    };
    config.validate().map_err(to_py_err)?;
    Ok(config)
}

/// A labeled pool: feature rows, integer scores and the score scale.
#[pyclass(frozen)]
struct Dataset {
    inner: LabeledDataset,
}

#[pymethods]
impl Dataset {
    /// Reads a feature CSV and its JSON manifest.
    #[staticmethod]
    fn load(features: PathBuf, manifest: PathBuf) -> PyResult<Dataset> {
        Ok(Dataset {
            inner: load_dataset(features, manifest).map_err(to_py_err)?,
        })
    }

    /// Generates a seeded synthetic pool with a linear target.
    #[staticmethod]
    #[pyo3(signature = (n, p, beta, noise_sd=1.0, min_score=2, max_score=12, seed=0))]
    fn synthetic(
        n: usize,
        p: usize,
        beta: Vec<f64>,
        noise_sd: f64,
        min_score: i32,
        max_score: i32,
        seed: u64,
    ) -> PyResult<Dataset> {
        let range = ScoreRange::new(min_score, max_score).map_err(to_py_err)?;
        Ok(Dataset {
            inner: generate_synthetic(n, p, &beta, noise_sd, range, seed).map_err(to_py_err)?,
        })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn p(&self) -> usize {
        self.inner.p()
    }

    #[getter]
    fn set_id(&self) -> String {
        self.inner.manifest().set_id().to_string()
    }

    #[getter]
    fn score_range(&self) -> (i32, i32) {
        let range = self.inner.manifest().score_range();
        (range.min_score(), range.max_score())
    }

    fn scores(&self) -> Vec<i32> {
        self.inner.scores().to_vec()
    }

    fn row_ids(&self) -> Vec<String> {
        self.inner.features().row_ids().to_vec()
    }

    /// Feature rows as a list of lists.
    fn features(&self) -> Vec<Vec<f64>> {
        (0..self.inner.n())
            .map(|i| self.inner.features().row(i).to_vec())
            .collect()
    }

    fn subset(&self, indices: Vec<usize>) -> PyResult<Dataset> {
        Ok(Dataset {
            inner: self.inner.subset(&indices).map_err(to_py_err)?,
        })
    }

    fn half_sample(&self, seed: u64) -> PyResult<Dataset> {
        Ok(Dataset {
            inner: poolsel::half_sample(&self.inner, seed).map_err(to_py_err)?,
        })
    }

    fn write(&self, features: PathBuf, manifest: PathBuf) -> PyResult<()> {
        write_dataset(&self.inner, features, manifest).map_err(to_py_err)
    }

    fn __len__(&self) -> usize {
        self.inner.n()
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(set_id='{}', n={}, p={})",
            self.inner.manifest().set_id(),
            self.inner.n(),
            self.inner.p()
        )
    }
}

/// A selected subset of pool rows.
#[pyclass(frozen)]
struct Design {
    algorithm: String,
    seed: u64,
    indices: Vec<usize>,
    row_ids: Vec<String>,
    criterion_value: Option<f64>,
}

#[pymethods]
impl Design {
    /// Reads a design file and resolves its row ids against a pool.
    #[staticmethod]
    fn load(path: PathBuf, dataset: &Dataset) -> PyResult<Design> {
        let file = DesignFile::read(path).map_err(to_py_err)?;
        let design = file.resolve(dataset.inner.features()).map_err(to_py_err)?;
        Ok(Design {
            algorithm: file.algorithm,
            seed: file.seed,
            indices: design.indices().to_vec(),
            row_ids: file.row_ids,
            criterion_value: file.criterion_value,
        })
    }

    #[getter]
    fn algorithm(&self) -> &str {
        &self.algorithm
    }

    #[getter]
    fn indices(&self) -> Vec<usize> {
        self.indices.clone()
    }

    #[getter]
    fn row_ids(&self) -> Vec<String> {
        self.row_ids.clone()
    }

    #[getter]
    fn criterion_value(&self) -> Option<f64> {
        self.criterion_value
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        DesignFile {
            algorithm: self.algorithm.clone(),
            m: self.indices.len(),
            seed: self.seed,
            criterion_value: self.criterion_value,
            row_ids: self.row_ids.clone(),
        }
        .write(path)
        .map_err(to_py_err)
    }

    fn __len__(&self) -> usize {
        self.indices.len()
    }

    fn __repr__(&self) -> String {
        format!("Design(algorithm='{}', m={})", self.algorithm, self.indices.len())
    }
}

/// A fitted ridge model.
#[pyclass(frozen)]
struct Model {
    inner: RidgeModel,
}

#[pymethods]
impl Model {
    #[staticmethod]
    fn from_json(json: &str) -> PyResult<Model> {
        Ok(Model {
            inner: RidgeModel::from_json(json).map_err(to_py_err)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Model> {
        let json = std::fs::read_to_string(&path).map_err(|e| to_py_err(Error::io(path, e)))?;
        Model::from_json(&json)
    }

    #[getter]
    fn lambda_(&self) -> f64 {
        self.inner.lambda()
    }

    /// Coefficients in standardized feature space.
    #[getter]
    fn coefficients(&self) -> Vec<f64> {
        self.inner.coefficients().to_vec()
    }

    #[getter]
    fn intercept(&self) -> f64 {
        self.inner.intercept()
    }

    /// Rounded predictions on the model's score scale.
    fn predict(&self, dataset: &Dataset) -> PyResult<Vec<i32>> {
        self.inner.predict_scores(dataset.inner.features()).map_err(to_py_err)
    }

    /// Unrounded predictions.
    fn predict_raw(&self, dataset: &Dataset) -> PyResult<Vec<f64>> {
        self.inner.predict(dataset.inner.features()).map_err(to_py_err)
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(to_py_err)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        let json = self.to_json()?;
        std::fs::write(&path, json).map_err(|e| to_py_err(Error::io(path, e)))
    }

    fn __repr__(&self) -> String {
        format!("Model(p={}, lambda={})", self.inner.p(), self.inner.lambda())
    }
}

/// One simulation trial: the correlation one algorithm reached in one
/// half-sample cell.
#[pyclass(frozen)]
struct Trial {
    inner: TrialResult,
}

#[pymethods]
impl Trial {
    #[getter]
    fn set_id(&self) -> String {
        self.inner.set_id.clone()
    }

    #[getter]
    fn algorithm(&self) -> String {
        self.inner.algorithm.label().to_string()
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m
    }

    #[getter]
    fn iteration(&self) -> usize {
        self.inner.iteration
    }

    #[getter]
    fn r(&self) -> Option<f64> {
        self.inner.r
    }

    #[getter]
    fn reference_r(&self) -> Option<f64> {
        self.inner.reference_r
    }

    #[getter]
    fn skipped(&self) -> bool {
        self.inner.skipped
    }

    fn __repr__(&self) -> String {
        format!(
            "Trial(set_id='{}', algorithm='{}', m={}, iteration={}, r={:?})",
            self.inner.set_id,
            self.inner.algorithm.label(),
            self.inner.m,
            self.inner.iteration,
            self.inner.r
        )
    }
}

/// Aggregated results for one (set, algorithm, m) group.
#[pyclass(frozen)]
struct Summary {
    inner: SummaryRow,
}

#[pymethods]
impl Summary {
    #[getter]
    fn set_id(&self) -> String {
        self.inner.set_id.clone()
    }

    #[getter]
    fn algorithm(&self) -> String {
        self.inner.algorithm.label().to_string()
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m
    }

    #[getter]
    fn mean_r(&self) -> f64 {
        self.inner.mean_r
    }

    #[getter]
    fn sd_r(&self) -> f64 {
        self.inner.sd_r
    }

    #[getter]
    fn ci95(&self) -> (f64, f64) {
        (self.inner.ci95_low, self.inner.ci95_high)
    }

    #[getter]
    fn pct_change(&self) -> f64 {
        self.inner.pct_change
    }

    #[getter]
    fn significant(&self) -> bool {
        self.inner.significant
    }

    fn __repr__(&self) -> String {
        format!(
            "Summary(set_id='{}', algorithm='{}', m={}, mean_r={:.4})",
            self.inner.set_id,
            self.inner.algorithm.label(),
            self.inner.m,
            self.inner.mean_r
        )
    }
}

/// Selects a design from a pool with the named strategy.
#[pyfunction]
#[pyo3(signature = (dataset, algorithm, m, seed=0, criterion="D", distance="mahalanobis", restarts=10, augment=None))]
#[allow(clippy::too_many_arguments)]
fn select(
    dataset: &Dataset,
    algorithm: &str,
    m: usize,
    seed: u64,
    criterion: &str,
    distance: &str,
    restarts: usize,
    augment: Option<&Design>,
) -> PyResult<Design> {
    let algorithm = parse_algorithm(algorithm)?;
    let config = sampler_config(criterion, distance, restarts, seed)?;
    let pool = dataset.inner.features();

    let design = match augment {
        Some(base) => {
            if algorithm != Algorithm::Fedorov {
                return Err(PyValueError::new_err(
                    "augment only applies to the fedorov strategy",
                ));
            }
            if m <= base.indices.len() {
                return Err(PyValueError::new_err(format!(
                    "m = {m} does not extend the base design of {} rows",
                    base.indices.len()
                )));
            }
            let fixed = poolsel::Design::new(pool, base.indices.clone()).map_err(to_py_err)?;
            fedorov_augment(pool, Some(&fixed), m - base.indices.len(), &config)
                .map_err(to_py_err)?
        }
        None => algorithm.select(pool, m, &config).map_err(to_py_err)?,
    };

    let file = DesignFile::from_design(&design, pool, algorithm.label(), seed).map_err(to_py_err)?;
    Ok(Design {
        algorithm: file.algorithm,
        seed: file.seed,
        indices: design.indices().to_vec(),
        row_ids: file.row_ids,
        criterion_value: file.criterion_value,
    })
}

/// Fits a ridge model, optionally restricted to a design's rows.
#[pyfunction]
#[pyo3(signature = (dataset, lambda_=1.0, design=None))]
fn fit(dataset: &Dataset, lambda_: f64, design: Option<&Design>) -> PyResult<Model> {
    let selected = match design {
        Some(d) => dataset.inner.subset(&d.indices).map_err(to_py_err)?,
        None => dataset.inner.clone(),
    };
    let model = fit_ridge(
        selected.features(),
        &selected.scores_f64(),
        lambda_,
        selected.manifest().score_range(),
    )
    .map_err(to_py_err)?;
    Ok(Model { inner: model })
}

/// Runs the half-sample comparison and returns one `Trial` per
/// (m, iteration, algorithm) cell, in canonical order.
#[pyfunction]
#[pyo3(signature = (train, test, m_grid, iterations=300, algorithms=None, lambda_=1.0, master_seed=0, restarts=10, criterion="D", distance="mahalanobis"))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    train: &Dataset,
    test: &Dataset,
    m_grid: Vec<usize>,
    iterations: usize,
    algorithms: Option<Vec<String>>,
    lambda_: f64,
    master_seed: u64,
    restarts: usize,
    criterion: &str,
    distance: &str,
) -> PyResult<Vec<Trial>> {
    let algorithms = match algorithms {
        Some(names) => names
            .iter()
            .map(|name| parse_algorithm(name))
            .collect::<PyResult<Vec<_>>>()?,
        None => Algorithm::ALL.to_vec(),
    };
    let plan = SimulationPlan {
        m_grid,
        iterations,
        algorithms,
        sampler_config: sampler_config(criterion, distance, restarts, 0)?,
        lambda: lambda_,
        master_seed,
        persistence_step: 1,
    };
    let trials = run_simulation(&train.inner, &test.inner, &plan).map_err(to_py_err)?;
    Ok(trials.into_iter().map(|inner| Trial { inner }).collect())
}

/// Aggregates trials into per-(set, algorithm, m) summary rows.
#[pyfunction]
fn summarize(trials: Vec<Py<Trial>>) -> PyResult<Vec<Summary>> {
    let inner: Vec<TrialResult> = trials.iter().map(|t| t.get().inner.clone()).collect();
    let rows = poolsel::summarize(&inner).map_err(to_py_err)?;
    Ok(rows.into_iter().map(|inner| Summary { inner }).collect())
}

/// Renders summary rows as the percent-change-vs-random text table.
#[pyfunction]
fn percent_table(rows: Vec<Py<Summary>>) -> String {
    let inner: Vec<SummaryRow> = rows.iter().map(|r| r.get().inner.clone()).collect();
    format_percent_table(&inner)
}

#[pyfunction]
fn pearson(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    poolsel::pearson(&a, &b).map_err(to_py_err)
}

#[pyfunction]
fn fisher_z(r: f64) -> PyResult<f64> {
    poolsel::fisher_z(r).map_err(to_py_err)
}

/// Welch's t-test; returns (t, p).
#[pyfunction]
fn welch_t_test(a: Vec<f64>, b: Vec<f64>) -> PyResult<(f64, f64)> {
    poolsel::welch_t_test(&a, &b).map_err(to_py_err)
}

#[pyfunction]
fn derive_seed(base: u64, tags: Vec<String>) -> u64 {
    let refs: Vec<&str> = tags.iter().map(String::as_str).collect();
    poolsel::derive_seed(base, &refs)
}

#[pymodule]
fn poolsel_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Dataset>()?;
    m.add_class::<Design>()?;
    m.add_class::<Model>()?;
    m.add_class::<Trial>()?;
    m.add_class::<Summary>()?;
    m.add_function(wrap_pyfunction!(select, m)?)?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(summarize, m)?)?;
    m.add_function(wrap_pyfunction!(percent_table, m)?)?;
    m.add_function(wrap_pyfunction!(pearson, m)?)?;
    m.add_function(wrap_pyfunction!(fisher_z, m)?)?;
    m.add_function(wrap_pyfunction!(welch_t_test, m)?)?;
    m.add_function(wrap_pyfunction!(derive_seed, m)?)?;
    Ok(())
}
