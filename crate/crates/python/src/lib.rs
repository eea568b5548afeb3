//! Python bindings: datasets, forest parameters, fitted fiducial models and
//! the simulation studies.

use pyo3::exceptions::{PyArithmeticError, PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use forest::experiments::{minimal_tree_mass_trace, run_coverage_experiment, SimConfig};
use forest::{ColumnRef, ColumnSpec, Error, ErrorClass, ModelArchive, SseMode};

fn to_py(error: Error) -> PyErr {
    match (&error, error.class()) {
        (Error::Io { .. } | Error::Write { .. }, _) => PyOSError::new_err(error.to_string()),
        (_, ErrorClass::Numeric) => PyArithmeticError::new_err(error.to_string()),
        _ => PyValueError::new_err(error.to_string()),
    }
}

/// Numeric regression data: one row of features per response value.
#[pyclass(module = "fiducial_forest", frozen, skip_from_py_object)]
#[derive(Clone)]
struct Dataset {
    inner: forest::Dataset,
}

#[pymethods]
impl Dataset {
    #[new]
    #[pyo3(signature = (rows, response, feature_names=None))]
    fn new(
        rows: Vec<Vec<f64>>,
        response: Vec<f64>,
        feature_names: Option<Vec<String>>,
    ) -> PyResult<Self> {
        let base = forest::Dataset::from_rows(&rows, response).map_err(to_py)?;
        let inner = match feature_names {
            None => base,
            Some(names) => {
                let columns = (0..base.n_features())
                    .map(|j| base.column(j).to_vec())
                    .collect();
                forest::Dataset::new(
                    columns,
                    base.response().to_vec(),
                    base.row_ids().to_vec(),
                    names,
                )
                .map_err(to_py)?
            }
        };
        Ok(Self { inner })
    }

    /// Read a CSV file, dropping rows with missing or non-numeric cells.
    /// Returns the dataset and the number of dropped rows.
    #[staticmethod]
    #[pyo3(signature = (path, target, features=None, missing=None))]
    fn read_csv(
        path: &str,
        target: &str,
        features: Option<Vec<String>>,
        missing: Option<String>,
    ) -> PyResult<(Self, usize)> {
        let mut spec = ColumnSpec::new(target);
        if let Some(features) = features {
            spec = spec.with_features(features.into_iter().map(ColumnRef::Name).collect());
        }
        if let Some(m) = missing {
            spec = spec.with_missing_sentinel(m);
        }
        let csv = forest::read_csv(path, &spec).map_err(to_py)?;
        Ok((Self { inner: csv.dataset }, csv.dropped_rows))
    }

    /// Random train/test partition with `floor(n * test_fraction)` test rows.
    #[pyo3(signature = (test_fraction, seed=0))]
    fn split(&self, test_fraction: f64, seed: u64) -> PyResult<(Self, Self)> {
        let mut stream = forest::make_stream(seed, &[forest::rng::phase::SPLIT]);
        let (train, test) =
            forest::train_test_split(&self.inner, test_fraction, &mut stream).map_err(to_py)?;
        Ok((Self { inner: train }, Self { inner: test }))
    }

    #[getter]
    fn n_rows(&self) -> usize {
        self.inner.n_rows()
    }

    #[getter]
    fn n_features(&self) -> usize {
        self.inner.n_features()
    }

    #[getter]
    fn feature_names(&self) -> Vec<String> {
        self.inner.feature_names().to_vec()
    }

    #[getter]
    fn response(&self) -> Vec<f64> {
        self.inner.response().to_vec()
    }

    fn row(&self, index: usize) -> PyResult<Vec<f64>> {
        if index >= self.inner.n_rows() {
            return Err(PyValueError::new_err(format!("row {index} out of range")));
        }
        Ok(self.inner.row(index))
    }

    fn __len__(&self) -> usize {
        self.inner.n_rows()
    }

    fn __repr__(&self) -> String {
        format!(
            "Dataset(n_rows={}, n_features={})",
            self.inner.n_rows(),
            self.inner.n_features()
        )
    }
}

fn parse_sse_mode(name: &str) -> PyResult<SseMode> {
    match name {
        "projection" => Ok(SseMode::Projection),
        "honest-all" => Ok(SseMode::HonestAll),
        other => Err(PyValueError::new_err(format!(
            "unknown sse mode `{other}` (expected `projection` or `honest-all`)"
        ))),
    }
}

/// Forest hyperparameters.
#[pyclass(module = "fiducial_forest", frozen, skip_from_py_object)]
#[derive(Clone)]
struct ForestParams {
    inner: forest::ForestParams,
}

#[pymethods]
impl ForestParams {
    #[new]
    #[pyo3(signature = (n_trees=1000, min_node_size=5, mtry=None, max_leaves=None, sse_mode="projection"))]
    fn new(
        n_trees: usize,
        min_node_size: usize,
        mtry: Option<usize>,
        max_leaves: Option<usize>,
        sse_mode: &str,
    ) -> PyResult<Self> {
        Ok(Self {
            inner: forest::ForestParams {
                n_trees,
                min_node_size,
                mtry,
                max_leaves,
                sse_mode: parse_sse_mode(sse_mode)?,
            },
        })
    }

    #[getter]
    fn n_trees(&self) -> usize {
        self.inner.n_trees
    }

    #[getter]
    fn min_node_size(&self) -> usize {
        self.inner.min_node_size
    }

    #[getter]
    fn mtry(&self) -> Option<usize> {
        self.inner.mtry
    }

    #[getter]
    fn max_leaves(&self) -> Option<usize> {
        self.inner.max_leaves
    }

    fn __repr__(&self) -> String {
        format!("ForestParams({:?})", self.inner)
    }
}

fn interval(i: forest::Interval) -> (f64, f64) {
    (i.lower, i.upper)
}

/// A trained honest forest together with its fiducial sample.
#[pyclass(module = "fiducial_forest", frozen)]
struct FiducialModel {
    ensemble: forest::FiducialEnsemble,
    archive: ModelArchive,
}

impl FiducialModel {
    fn from_archive(archive: ModelArchive) -> PyResult<Self> {
        Ok(Self {
            ensemble: archive.ensemble().map_err(to_py)?,
            archive,
        })
    }
}

#[pymethods]
impl FiducialModel {
    /// Train a forest on `data` and draw `draws` fiducial samples.
    #[staticmethod]
    #[pyo3(signature = (data, params=None, draws=1000, seed=0))]
    fn fit(
        py: Python<'_>,
        data: &Dataset,
        params: Option<&ForestParams>,
        draws: usize,
        seed: u64,
    ) -> PyResult<Self> {
        let params = params.map(|p| p.inner.clone()).unwrap_or_default();
        let data = &data.inner;
        let ensemble = py
            .detach(|| forest::fit_ensemble(data, &params, draws, seed))
            .map_err(to_py)?;
        let archive = ModelArchive::new(&ensemble, seed, data.fingerprint());
        Ok(Self { ensemble, archive })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Self::from_archive(forest::load_model(path).map_err(to_py)?)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        forest::save_model(&self.archive, path).map_err(to_py)
    }

    /// Mean of the resampled trees at `x`.
    fn point_estimate(&self, x: Vec<f64>) -> PyResult<f64> {
        self.ensemble.point_estimate(&x).map_err(to_py)
    }

    /// Average of the forest's honest trees at `x`.
    fn forest_predict(&self, x: Vec<f64>) -> PyResult<f64> {
        self.ensemble.forest().predict(&x).map_err(to_py)
    }

    /// Interval for the regression function at `x`.
    #[pyo3(signature = (x, level=0.95))]
    fn confidence_interval(&self, x: Vec<f64>, level: f64) -> PyResult<(f64, f64)> {
        self.ensemble
            .confidence_interval(&x, level)
            .map(interval)
            .map_err(to_py)
    }

    /// Interval for a new response at `x`; `row` labels the noise stream so
    /// repeated calls are reproducible.
    #[pyo3(signature = (x, level=0.95, row=0))]
    fn prediction_interval(&self, x: Vec<f64>, level: f64, row: u64) -> PyResult<(f64, f64)> {
        let mut stream = forest::prediction_key(self.archive.master_seed, row).stream();
        self.ensemble
            .prediction_interval(&x, level, &mut stream)
            .map(interval)
            .map_err(to_py)
    }

    #[pyo3(signature = (level=0.95))]
    fn sigma_interval(&self, level: f64) -> PyResult<(f64, f64)> {
        self.ensemble
            .sigma_interval(level)
            .map(interval)
            .map_err(to_py)
    }

    /// The fiducial sample of the noise standard deviation.
    fn sigmas(&self) -> Vec<f64> {
        self.ensemble.sigmas()
    }

    /// Normalized weight of every forest tree (zero for excluded trees).
    fn tree_weights(&self) -> Vec<f64> {
        let w = self.ensemble.weights();
        (0..self.ensemble.forest().trees.len())
            .map(|t| w.weight_of(t))
            .collect()
    }

    #[getter]
    fn n_trees(&self) -> usize {
        self.ensemble.forest().trees.len()
    }

    #[getter]
    fn n_draws(&self) -> usize {
        self.ensemble.len()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.archive.master_seed
    }

    fn __repr__(&self) -> String {
        format!(
            "FiducialModel(n_trees={}, n_draws={}, seed={})",
            self.n_trees(),
            self.n_draws(),
            self.seed()
        )
    }
}

/// Unnormalized log weight of a tree with `leaves` leaves and residual sum of
/// squares `sse` fitted to `n` rows.
#[pyfunction]
fn log_weight(n: usize, leaves: usize, sse: f64) -> PyResult<f64> {
    forest::log_weight(n, leaves, sse).map_err(to_py)
}

#[pyfunction]
fn normalize_weights(log_weights: Vec<f64>) -> PyResult<Vec<f64>> {
    forest::normalize_weights(&log_weights).map_err(to_py)
}

/// Linear-interpolation percentile (Hyndman-Fan type 7), `q` in [0, 1].
#[pyfunction]
fn percentile(values: Vec<f64>, q: f64) -> PyResult<f64> {
    forest::percentile(&values, q).map_err(to_py)
}

/// One of the synthetic regression functions: `cosine`, `xor` or `and`.
#[pyfunction]
fn test_function(name: &str, x: Vec<f64>) -> PyResult<f64> {
    forest::experiments::test_function(name, &x).map_err(to_py)
}

/// Coverage of the mean, sigma and future-response intervals over repeated
/// synthetic data sets; one dict per interval type.
#[pyfunction]
#[pyo3(signature = (function, n, p, reps=200, level=0.95, seed=0, sigma=1.0, params=None, draws=500))]
#[allow(clippy::too_many_arguments)]
fn run_coverage<'py>(
    py: Python<'py>,
    function: &str,
    n: usize,
    p: usize,
    reps: usize,
    level: f64,
    seed: u64,
    sigma: f64,
    params: Option<&ForestParams>,
    draws: usize,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let mut config = SimConfig::new(function.parse().map_err(to_py)?, n, p);
    config.reps = reps;
    config.level = level;
    config.master_seed = seed;
    config.sigma = sigma;
    config.draws = draws;
    if let Some(params) = params {
        config.forest = params.inner.clone();
    }
    let report = py
        .detach(|| run_coverage_experiment(&config))
        .map_err(to_py)?;
    report
        .records
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("function", r.function.name())?;
            d.set_item("n", r.n)?;
            d.set_item("p", r.p)?;
            d.set_item("target", r.target.name())?;
            d.set_item("level", r.level)?;
            d.set_item("reps", r.reps)?;
            d.set_item("failed_reps", r.failed_reps)?;
            d.set_item("coverage", r.coverage)?;
            d.set_item("mc_stderr", r.mc_stderr)?;
            d.set_item("mean_width", r.mean_width)?;
            Ok(d)
        })
        .collect()
}

/// Fiducial mass on the smallest correct trees of a fixed candidate family,
/// for data simulated at each of the increasing `sizes`.
#[pyfunction]
#[pyo3(signature = (sizes, seed=0))]
fn minimal_tree_mass(py: Python<'_>, sizes: Vec<usize>, seed: u64) -> PyResult<Vec<f64>> {
    py.detach(|| minimal_tree_mass_trace(&sizes, seed))
        .map(|t| t.masses)
        .map_err(to_py)
}

#[pymodule]
fn fiducial_forest(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Dataset>()?;
    m.add_class::<ForestParams>()?;
    m.add_class::<FiducialModel>()?;
    m.add_function(wrap_pyfunction!(log_weight, m)?)?;
    m.add_function(wrap_pyfunction!(normalize_weights, m)?)?;
    m.add_function(wrap_pyfunction!(percentile, m)?)?;
    m.add_function(wrap_pyfunction!(test_function, m)?)?;
    m.add_function(wrap_pyfunction!(run_coverage, m)?)?;
    m.add_function(wrap_pyfunction!(minimal_tree_mass, m)?)?;
    Ok(())
}
