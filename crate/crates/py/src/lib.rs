//! Python bindings for the `flowcast` crate.

use std::path::PathBuf;

use ndarray::Array2;
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use flowcast::baselines::{dema_series, soft_threshold as soft};
use flowcast::config::{ExperimentConfig, ModelName};
use flowcast::eval;
use flowcast::experiment::{self, checkpoint_path};
use flowcast::ingest::{ingest_file, CleaningStats};
use flowcast::nn::{CellKind, NetworkDims, NetworkParams};
use flowcast::Error;

fn py_err(e: Error) -> PyErr {
    let msg = e.to_string();
    match e {
        Error::Config(_) => PyValueError::new_err(msg),
        Error::Io { .. } => PyOSError::new_err(msg),
        _ => PyRuntimeError::new_err(msg),
    }
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<Array2<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != m) {
        return Err(PyValueError::new_err("rows must all have the same length"));
    }
    Array2::from_shape_vec((n, m), rows.into_iter().flatten().collect())
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Experiment configuration. Every key is optional; missing keys take defaults.
#[pyclass(name = "Config", module = "flowcast")]
struct PyConfig {
    inner: ExperimentConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    #[pyo3(signature = (toml = ""))]
    fn new(toml: &str) -> PyResult<Self> {
        ExperimentConfig::from_toml(toml).map(|inner| PyConfig { inner }).map_err(py_err)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        ExperimentConfig::load(&path).map(|inner| PyConfig { inner }).map_err(py_err)
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml()
    }

    fn digest(&self) -> String {
        self.inner.digest()
    }

    /// Full check for `run`; raises ValueError on the first problem.
    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(py_err)
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[setter]
    fn set_seed(&mut self, seed: u64) {
        self.inner.seed = seed;
    }

    #[getter]
    fn workdir(&self) -> PathBuf {
        self.inner.workdir.clone()
    }

    #[setter]
    fn set_workdir(&mut self, dir: PathBuf) {
        self.inner.workdir = dir;
    }

    #[getter]
    fn models(&self) -> Vec<&'static str> {
        self.inner.models.iter().map(|m| m.name()).collect()
    }

    #[setter]
    fn set_models(&mut self, names: Vec<String>) -> PyResult<()> {
        self.inner.models = ModelName::parse_list(&names.join(",")).map_err(py_err)?;
        Ok(())
    }

    #[getter]
    fn n_days(&self) -> usize {
        self.inner.window.n_days
    }

    #[getter]
    fn train_days(&self) -> usize {
        self.inner.data.train_days
    }

    fn __repr__(&self) -> String {
        format!(
            "Config(seed={}, workdir={:?}, models={:?}, n_days={})",
            self.inner.seed,
            self.inner.workdir,
            self.models(),
            self.inner.window.n_days
        )
    }
}

/// Cleaned demand counts indexed `[slot, region]`.
#[pyclass(name = "DemandTensor", module = "flowcast")]
struct PyDemandTensor {
    inner: flowcast::data::DemandTensor,
}

#[pymethods]
impl PyDemandTensor {
    #[getter]
    fn n_slots(&self) -> usize {
        self.inner.n_slots
    }

    /// Grid-cell index of every column.
    #[getter]
    fn region_ids(&self) -> Vec<usize> {
        self.inner.region_ids.clone()
    }

    fn get(&self, slot: usize, region: usize) -> PyResult<u32> {
        if slot >= self.inner.n_slots || region >= self.inner.n_regions() {
            return Err(PyValueError::new_err("index out of range"));
        }
        Ok(self.inner.get(slot, region))
    }

    fn total(&self) -> u64 {
        self.inner.total()
    }

    fn daily_means(&self) -> Vec<f64> {
        self.inner.daily_means()
    }

    fn to_list(&self) -> Vec<Vec<u32>> {
        (0..self.inner.n_slots).map(|t| self.inner.row(t).to_vec()).collect()
    }

    fn __len__(&self) -> usize {
        self.inner.n_slots
    }

    fn __repr__(&self) -> String {
        format!("DemandTensor(n_slots={}, n_regions={})", self.inner.n_slots, self.inner.n_regions())
    }
}

fn stats_dict<'py>(py: Python<'py>, s: &CleaningStats) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("total_rows", s.total_rows)?;
    d.set_item("skipped_malformed", s.skipped_malformed)?;
    d.set_item("dropped_out_of_box", s.dropped_out_of_box)?;
    d.set_item("dropped_out_of_window", s.dropped_out_of_window)?;
    d.set_item("dropped_cancel", s.dropped_cancel)?;
    d.set_item("merged_duplicates", s.merged_duplicates)?;
    d.set_item("regions_before", s.regions_before)?;
    d.set_item("regions_after", s.regions_after)?;
    Ok(d)
}

/// Write the synthetic request CSV and calendar into the workdir.
#[pyfunction]
fn generate<'py>(py: Python<'py>, config: &PyConfig) -> PyResult<Bound<'py, PyDict>> {
    let s = py.detach(|| experiment::cmd_generate(&config.inner)).map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("rows", s.rows)?;
    d.set_item("seed", s.seed)?;
    d.set_item("n_slots", s.n_slots)?;
    d.set_item("requests", s.requests)?;
    d.set_item("calendar", s.calendar)?;
    Ok(d)
}

/// Clean the workdir dataset; returns the tensor and the cleaning counts.
#[pyfunction]
fn ingest<'py>(py: Python<'py>, config: &PyConfig) -> PyResult<(PyDemandTensor, Bound<'py, PyDict>)> {
    let c = &config.inner;
    let (inner, stats) = py
        .detach(|| ingest_file(&c.requests_path(), &c.grid, &c.window, c.data.min_daily_demand))
        .map_err(py_err)?;
    Ok((PyDemandTensor { inner }, stats_dict(py, &stats)?))
}

/// Train and evaluate every configured model; returns per-method metrics.
#[pyfunction]
fn run<'py>(py: Python<'py>, config: &PyConfig) -> PyResult<Bound<'py, PyDict>> {
    let s = py.detach(|| experiment::cmd_run(&config.inner)).map_err(py_err)?;
    let out = PyDict::new(py);
    for m in &s.report.methods {
        let d = PyDict::new(py);
        d.set_item("rmse", m.rmse)?;
        d.set_item("mape", m.mape)?;
        d.set_item("training_seconds", m.training_seconds)?;
        d.set_item("epoch_seconds", m.epoch_seconds.clone())?;
        out.set_item(&m.name, d)?;
    }
    Ok(out)
}

/// Summary table of the last run in the workdir.
#[pyfunction]
fn report(config: &PyConfig) -> PyResult<String> {
    experiment::cmd_report(&config.inner).map_err(py_err)
}

/// Forecast slot `slot + 1`; maps region id to demand.
#[pyfunction]
#[pyo3(signature = (config, slot, model = "gru", checkpoint = None))]
fn predict<'py>(
    py: Python<'py>,
    config: &PyConfig,
    slot: usize,
    model: &str,
    checkpoint: Option<PathBuf>,
) -> PyResult<Bound<'py, PyDict>> {
    let path = match checkpoint {
        Some(p) => p,
        None => checkpoint_path(&config.inner, ModelName::parse(model).map_err(py_err)?),
    };
    let f = py.detach(|| experiment::cmd_predict(&config.inner, &path, slot)).map_err(py_err)?;
    let d = PyDict::new(py);
    for (r, v) in f.region_ids.iter().zip(&f.values) {
        d.set_item(r, v)?;
    }
    Ok(d)
}

#[pyfunction]
fn rmse(actual: Vec<Vec<f64>>, predicted: Vec<Vec<f64>>) -> PyResult<f64> {
    eval::rmse(matrix(actual)?.view(), matrix(predicted)?.view()).map_err(py_err)
}

/// Percentage error over entries with nonzero actual; returns `(value, excluded)`.
#[pyfunction]
fn mape(actual: Vec<Vec<f64>>, predicted: Vec<Vec<f64>>) -> PyResult<(f64, usize)> {
    let m = eval::mape(matrix(actual)?.view(), matrix(predicted)?.view()).map_err(py_err)?;
    Ok((m.value, m.excluded))
}

#[pyfunction]
fn soft_threshold(z: f64, gamma: f64) -> f64 {
    soft(z, gamma)
}

/// One-step DEMA forecasts: row `t` of the result predicts row `t + 1`.
#[pyfunction]
fn dema_forecast(alpha: f64, series: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(PyValueError::new_err("alpha must lie in (0, 1]"));
    }
    let f = dema_series(alpha, matrix(series)?.view());
    Ok(f.outer_iter().map(|r| r.to_vec()).collect())
}

/// Weights and biases inside the recurrent layers of a network.
#[pyfunction]
#[pyo3(signature = (kind, input_dim, hidden_dim, output_dim = 64, n_layers = 2))]
fn recurrent_param_count(kind: &str, input_dim: usize, hidden_dim: usize, output_dim: usize, n_layers: usize) -> PyResult<usize> {
    let kind = match kind {
        "rnn" => CellKind::SimpleRnn,
        "gru" => CellKind::Gru,
        "lstm" => CellKind::Lstm,
        other => return Err(PyValueError::new_err(format!("unknown cell kind {other:?}"))),
    };
    let dims = NetworkDims {
        kind,
        input_dim,
        hidden_dim,
        output_dim,
        n_layers,
    };
    Ok(NetworkParams::zeros(dims).recurrent_param_count())
}

#[pymodule]
#[pyo3(name = "flowcast")]
fn flowcast_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PyDemandTensor>()?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(ingest, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(report, m)?)?;
    m.add_function(wrap_pyfunction!(predict, m)?)?;
    m.add_function(wrap_pyfunction!(rmse, m)?)?;
    m.add_function(wrap_pyfunction!(mape, m)?)?;
    m.add_function(wrap_pyfunction!(soft_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(dema_forecast, m)?)?;
    m.add_function(wrap_pyfunction!(recurrent_param_count, m)?)?;
    Ok(())
}
