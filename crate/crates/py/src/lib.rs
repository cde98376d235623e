//! Python bindings: configuration, key choice, value generation, latency
//! histograms, trial aggregation, and whole experiment runs.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;

use ivs_core::cli::{cmd_run, cmd_verify, parse_config, parse_with_overrides};
use ivs_core::genkit::{KeyChooser as CoreChooser, ValueGenerator};
use ivs_core::metrics::{LatencyHistogram as CoreHistogram, MetricStats};
use ivs_core::model::{ExperimentConfig, KeyDistribution, Mode, RecordKey};
use ivs_core::runner::RunOptions;

create_exception!(ivs_py, IvsError, PyException);

fn py_err(e: ivs_core::Error) -> PyErr {
    use ivs_core::Error::*;
    match e.root() {
        Config { .. } | InvalidConfig(_) | InvalidArgument(_) => PyValueError::new_err(e.to_string()),
        _ => IvsError::new_err(e.to_string()),
    }
}

fn json_to_py<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| IvsError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Experiment configuration, parsed from workload properties text.
#[pyclass(name = "Config", module = "ivs_py", skip_from_py_object)]
pub struct Config {
    inner: ExperimentConfig,
}

#[pymethods]
impl Config {
    #[new]
    #[pyo3(signature = (text = "", overrides = Vec::new()))]
    fn new(text: &str, overrides: Vec<String>) -> PyResult<Self> {
        let file = parse_with_overrides(text, &overrides).map_err(py_err)?;
        Ok(Config { inner: file.config })
    }

    #[staticmethod]
    fn from_file(path: PathBuf) -> PyResult<Self> {
        Ok(Config {
            inner: parse_config(&path).map_err(py_err)?.config,
        })
    }

    /// 1,000 records with 10,000 extends and operations per epoch.
    #[staticmethod]
    fn lightweight() -> Self {
        Config {
            inner: ExperimentConfig::lightweight(),
        }
    }

    #[getter]
    fn record_count(&self) -> u64 {
        self.inner.record_count
    }

    #[getter]
    fn field_count(&self) -> usize {
        self.inner.schema.field_count
    }

    #[getter]
    fn epochs(&self) -> u32 {
        self.inner.epochs
    }

    #[setter]
    fn set_epochs(&mut self, v: u32) {
        self.inner.epochs = v;
    }

    #[getter]
    fn trials(&self) -> u32 {
        self.inner.trials
    }

    #[setter]
    fn set_trials(&mut self, v: u32) -> PyResult<()> {
        if v == 0 {
            return Err(PyValueError::new_err("trials must be at least 1"));
        }
        self.inner.trials = v;
        Ok(())
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[setter]
    fn set_seed(&mut self, v: u64) {
        self.inner.seed = v;
    }

    #[getter]
    fn mode(&self) -> &'static str {
        self.inner.mode.as_str()
    }

    #[setter]
    fn set_mode(&mut self, v: &str) -> PyResult<()> {
        self.inner.mode = v.parse::<Mode>().map_err(py_err)?;
        Ok(())
    }

    #[getter]
    fn backend(&self) -> &str {
        &self.inner.backend_id
    }

    #[setter]
    fn set_backend(&mut self, v: String) {
        self.inner.backend_id = v;
    }

    fn initial_volume(&self) -> u64 {
        self.inner.initial_volume()
    }

    /// Volume after `epoch` epochs if no extend is skipped.
    fn analytic_volume(&self, epoch: u32) -> u64 {
        self.inner.analytic_volume(epoch)
    }

    fn experiment_hash(&self) -> u64 {
        self.inner.experiment_hash()
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        json_to_py(py, &self.inner)
    }

    fn __repr__(&self) -> String {
        format!(
            "Config(records={}, fields={}, epochs={}, trials={}, mode={}, backend={})",
            self.inner.record_count,
            self.inner.schema.field_count,
            self.inner.epochs,
            self.inner.trials,
            self.inner.mode.as_str(),
            self.inner.backend_id
        )
    }
}

/// Seeded record index chooser: "uniform" or "zipfian".
#[pyclass(name = "KeyChooser", module = "ivs_py")]
pub struct KeyChooser {
    inner: CoreChooser,
}

#[pymethods]
impl KeyChooser {
    #[new]
    #[pyo3(signature = (distribution, item_count, seed, theta = 0.99, scramble = true))]
    fn new(distribution: &str, item_count: u64, seed: u64, theta: f64, scramble: bool) -> PyResult<Self> {
        let dist = match distribution {
            "uniform" => KeyDistribution::Uniform,
            "zipfian" => KeyDistribution::Zipfian { theta },
            other => {
                return Err(PyValueError::new_err(format!(
                    "unknown distribution {other:?} (uniform, zipfian)"
                )))
            }
        };
        Ok(KeyChooser {
            inner: CoreChooser::new(dist, item_count, scramble, seed).map_err(py_err)?,
        })
    }

    fn next_index(&mut self) -> u64 {
        self.inner.next_index()
    }

    fn next_key(&mut self) -> String {
        self.inner.next_key().render()
    }

    fn sample(&mut self, n: usize) -> Vec<u64> {
        (0..n).map(|_| self.inner.next_index()).collect()
    }
}

/// Latency histogram over 1 ns to 100 s with an exact mean.
#[pyclass(name = "LatencyHistogram", module = "ivs_py")]
#[derive(Default)]
pub struct LatencyHistogram {
    inner: CoreHistogram,
}

#[pymethods]
impl LatencyHistogram {
    #[new]
    fn new() -> Self {
        Self::default()
    }

    fn record_nanos(&mut self, ns: u64) {
        self.inner.record_nanos(ns);
    }

    fn record_many(&mut self, values: Vec<u64>) {
        values.into_iter().for_each(|ns| self.inner.record_nanos(ns));
    }

    #[getter]
    fn count(&self) -> u64 {
        self.inner.count()
    }

    fn mean_nanos(&self) -> Option<f64> {
        self.inner.mean_nanos()
    }

    fn quantile(&self, q: f64) -> PyResult<u64> {
        self.inner.quantile(q).map_err(py_err)
    }

    fn bucket_width(&self, ns: u64) -> u64 {
        self.inner.bucket_width(ns)
    }

    fn summary<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        json_to_py(py, &self.inner.summary().map_err(py_err)?)
    }
}

/// Canonical key string for a record index.
#[pyfunction]
fn render_key(index: u64) -> String {
    RecordKey::new(index).render()
}

/// Deterministic field value for `(seed, record index, field, length)`.
#[pyfunction]
fn generate_value<'py>(py: Python<'py>, seed: u64, index: u64, field: usize, length: usize) -> Bound<'py, PyBytes> {
    let v = ValueGenerator::new(seed).generate(RecordKey::new(index), field, length);
    PyBytes::new(py, &v)
}

type AggregateTuple = (f64, Option<f64>, Option<(f64, f64)>);

/// Mean, standard error and 95% band of per-trial samples. Stderr and band
/// are None for a single sample.
#[pyfunction]
fn aggregate(samples: Vec<f64>) -> PyResult<AggregateTuple> {
    let s = MetricStats::from_samples(&samples).map_err(py_err)?;
    Ok((s.mean, s.stderr, s.band()))
}

/// Runs every trial of `config.mode` and writes results under `output_dir`
/// exactly as the command line does. Returns the epoch reports per trial.
#[pyfunction]
#[pyo3(signature = (config, output_dir, state_digest = false, export_histograms = false))]
fn run<'py>(
    py: Python<'py>,
    config: PyRef<'py, Config>,
    output_dir: PathBuf,
    state_digest: bool,
    export_histograms: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let options = RunOptions {
        state_digest,
        export_histograms,
        ..RunOptions::default()
    };
    let inner = config.inner.clone();
    let outcome = py
        .detach(|| cmd_run(&inner, &output_dir, options))
        .map_err(py_err)?;
    json_to_py(py, &outcome.reports)
}

/// Verifies the dumps in one trial dump directory; returns the epochs checked.
#[pyfunction]
#[pyo3(signature = (dump_dir, epoch = None))]
fn verify(py: Python<'_>, dump_dir: PathBuf, epoch: Option<u32>) -> PyResult<Vec<u32>> {
    let out = py.detach(|| cmd_verify(&dump_dir, epoch)).map_err(py_err)?;
    Ok(out.epochs)
}

/// Adds the module contents to `m`.
pub fn register(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("IvsError", m.py().get_type::<IvsError>())?;
    m.add_class::<Config>()?;
    m.add_class::<KeyChooser>()?;
    m.add_class::<LatencyHistogram>()?;
    m.add_function(wrap_pyfunction!(render_key, m)?)?;
    m.add_function(wrap_pyfunction!(generate_value, m)?)?;
    m.add_function(wrap_pyfunction!(aggregate, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    Ok(())
}

#[pymodule]
fn ivs_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    register(m)
}
