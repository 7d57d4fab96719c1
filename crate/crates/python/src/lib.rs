//! Python bindings for the trustfed simulator.

use std::collections::{BTreeMap, BTreeSet};

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyBool, PyDict, PyFloat, PyInt, PyList, PyString};

use trustfed_core::config::ExperimentConfig;
use trustfed_core::federation::{self, run_experiment as run_core};
use trustfed_core::metrics::{self, ConfusionMatrix};
use trustfed_core::output::{client_log_csv, round_log_csv, RunReport};
use trustfed_core::participation::{self, Statuses};
use trustfed_core::smoothing::{self, SmoothedTrust, SmootherState};
use trustfed_core::topsis::{self, CriteriaWeights, DecisionMatrix, TrustScores};
use trustfed_core::ClientId;

fn err(e: trustfed_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn ids(n: usize) -> impl Iterator<Item = ClientId> {
    (0..n as u32).map(ClientId)
}

fn scores(values: &[f64]) -> TrustScores {
    ids(values.len()).zip(values.iter().copied()).collect()
}

fn sorted(set: &BTreeSet<ClientId>) -> Vec<u32> {
    set.iter().map(|c| c.0).collect()
}

/// Confusion matrix with rows = true class, columns = predicted class.
#[pyfunction]
fn confusion_matrix(predictions: Vec<usize>, labels: Vec<usize>, classes: usize) -> PyResult<Vec<Vec<u64>>> {
    Ok(metrics::confusion_matrix(&predictions, &labels, classes).map_err(err)?.rows())
}

/// Accuracy and macro precision / recall / F1 of a confusion matrix.
#[pyfunction]
fn macro_metrics<'py>(py: Python<'py>, matrix: Vec<Vec<u64>>) -> PyResult<Bound<'py, PyDict>> {
    let cm = ConfusionMatrix::from_rows(&matrix).map_err(err)?;
    let m = metrics::macro_metrics(&cm).map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("accuracy", m.accuracy)?;
    out.set_item("precision", m.macro_precision)?;
    out.set_item("recall", m.macro_recall)?;
    out.set_item("f1", m.macro_f1)?;
    Ok(out)
}

/// TOPSIS closeness per row of an n x 4 criteria matrix.
#[pyfunction]
#[pyo3(signature = (rows, weights=None))]
fn topsis_scores(rows: Vec<[f64; 4]>, weights: Option<[f64; 4]>) -> PyResult<Vec<f64>> {
    let weights = match weights {
        Some(w) => CriteriaWeights::new(w).map_err(err)?,
        None => CriteriaWeights::default(),
    };
    let matrix = DecisionMatrix::new(ids(rows.len()).collect(), rows).map_err(err)?;
    Ok(topsis::topsis_scores(&matrix, &weights).values().collect())
}

/// Population variance of a round's raw scores.
#[pyfunction]
fn trust_variance(values: Vec<f64>) -> PyResult<f64> {
    smoothing::trust_variance(&scores(&values)).map_err(err)
}

/// Next smoothing coefficient under the adaptive rule.
#[pyfunction]
#[pyo3(signature = (alpha, sigma2, variance_threshold=smoothing::DEFAULT_VARIANCE_THRESHOLD, alpha_floor=smoothing::DEFAULT_ALPHA_FLOOR))]
fn adapt_alpha(alpha: f64, sigma2: f64, variance_threshold: f64, alpha_floor: f64) -> f64 {
    let state = SmootherState::adaptive(alpha, variance_threshold, alpha_floor);
    smoothing::adapt_alpha(&state, sigma2).alpha
}

/// One EMA step, element-wise over aligned lists.
#[pyfunction]
fn ema_update(prev: Vec<f64>, raw: Vec<f64>, alpha: f64) -> PyResult<Vec<f64>> {
    let prev: SmoothedTrust = ids(prev.len()).zip(prev).collect();
    Ok(smoothing::ema_update(&prev, &scores(&raw), alpha).map_err(err)?.values().collect())
}

/// Sample-size weighted mean of parameter vectors.
#[pyfunction]
fn fedavg_aggregate(updates: Vec<Vec<f64>>, sizes: Vec<usize>) -> PyResult<Vec<f64>> {
    let views: Vec<&[f64]> = updates.iter().map(Vec::as_slice).collect();
    federation::weighted_mean(&views, &sizes).map_err(err)
}

/// Omission / readmission state for a fixed set of clients.
#[pyclass(module = "trustfed")]
struct ParticipationTracker {
    statuses: Statuses,
    tau: f64,
    m: usize,
}

#[pymethods]
impl ParticipationTracker {
    #[new]
    #[pyo3(signature = (client_ids, tau=0.75, m=3))]
    fn new(client_ids: Vec<u32>, tau: f64, m: usize) -> PyResult<Self> {
        let ids: Vec<ClientId> = client_ids.into_iter().map(ClientId).collect();
        let statuses = participation::register_clients(&ids).map_err(err)?;
        Ok(Self { statuses, tau, m })
    }

    /// Apply one round of smoothed trust (client id -> value).
    fn decide<'py>(&mut self, py: Python<'py>, smoothed: BTreeMap<u32, f64>) -> PyResult<Bound<'py, PyDict>> {
        let smoothed: SmoothedTrust = smoothed.into_iter().map(|(id, t)| (ClientId(id), t)).collect();
        let (decision, next) = participation::decide_round(&self.statuses, &smoothed, self.tau, self.m).map_err(err)?;
        self.statuses = next;
        let out = PyDict::new(py);
        out.set_item("omitted_now", sorted(&decision.omitted_now))?;
        out.set_item("readmitted_now", sorted(&decision.readmitted_now))?;
        out.set_item("active", sorted(&decision.active_set))?;
        Ok(out)
    }

    /// Client id -> (status, consecutive rounds at or above tau).
    fn statuses(&self) -> BTreeMap<u32, (&'static str, u32)> {
        self.statuses
            .values()
            .map(|s| (s.client_id.0, (s.status.as_str(), s.rounds_above_tau)))
            .collect()
    }
}

fn to_toml(value: &Bound<'_, PyAny>) -> PyResult<toml::Value> {
    if value.is_instance_of::<PyBool>() {
        Ok(toml::Value::Boolean(value.extract()?))
    } else if value.is_instance_of::<PyInt>() {
        Ok(toml::Value::Integer(value.extract()?))
    } else if value.is_instance_of::<PyFloat>() {
        Ok(toml::Value::Float(value.extract()?))
    } else if value.is_instance_of::<PyString>() {
        Ok(toml::Value::String(value.extract()?))
    } else if let Ok(list) = value.cast::<PyList>() {
        list.iter().map(|v| to_toml(&v)).collect::<PyResult<_>>().map(toml::Value::Array)
    } else {
        Err(PyValueError::new_err(format!("unsupported config value: {value}")))
    }
}

/// Default configuration with dotted-key overrides, e.g.
/// `{"rounds": 5, "dataset.n_per_class": 40}`.
fn build_config(overrides: Option<&Bound<'_, PyDict>>) -> PyResult<ExperimentConfig> {
    let mut config = ExperimentConfig::default();
    let mut entries = Vec::new();
    if let Some(d) = overrides {
        for (k, v) in d.iter() {
            entries.push((k.extract::<String>()?, to_toml(&v)?));
        }
    }
    // scale first so explicit keys override it
    entries.sort_by_key(|(k, _)| k != "scale");
    for (k, v) in &entries {
        config.set(k, v).map_err(err)?;
    }
    config.validate().map_err(err)?;
    Ok(config)
}

/// Run one strategy; returns the report plus both CSV logs as text.
#[pyfunction]
#[pyo3(signature = (overrides=None))]
fn run_experiment<'py>(py: Python<'py>, overrides: Option<&Bound<'py, PyDict>>) -> PyResult<Bound<'py, PyDict>> {
    let config = build_config(overrides)?;
    let out = py.detach(|| run_core(&config)).map_err(err)?;
    let utf8 = |b: Vec<u8>| String::from_utf8(b).map_err(|e| PyValueError::new_err(e.to_string()));
    let report = RunReport::new(&config, std::slice::from_ref(&out));
    let json = serde_json::to_string(&report).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let result = PyDict::new(py);
    result.set_item("report", py.import("json")?.call_method1("loads", (json,))?)?;
    result.set_item("round_log_csv", utf8(round_log_csv(&out.logs).map_err(err)?)?)?;
    result.set_item("client_log_csv", utf8(client_log_csv(&out.client_logs).map_err(err)?)?)?;
    result.set_item("final_params", out.final_params.values().to_vec())?;
    Ok(result)
}

#[pymodule]
fn trustfed(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(confusion_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(macro_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(topsis_scores, m)?)?;
    m.add_function(wrap_pyfunction!(trust_variance, m)?)?;
    m.add_function(wrap_pyfunction!(adapt_alpha, m)?)?;
    m.add_function(wrap_pyfunction!(ema_update, m)?)?;
    m.add_function(wrap_pyfunction!(fedavg_aggregate, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_class::<ParticipationTracker>()?;
    Ok(())
}
