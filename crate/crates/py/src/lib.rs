//! Python bindings.
//!
//! Structured values cross the boundary as plain dicts and lists, via JSON.

use std::path::PathBuf;
use std::sync::Arc;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;

use fedeval_agent::sheets;
use fedeval_agent::{AgentError, ApiClient, HttpTransport};
use fedeval_core::cube::{self, PinnedHashes, VerifyError};
use fedeval_core::{
    AccountId, AggregationMethod, AuditEvent, BenchmarkId, ContentUid, CubeId, EvaluationResult,
    EvaluationTask, ExecutedHashes, MetricRange, MetricSpec, ResultId, Timestamp,
};

create_exception!(
    fedeval,
    IntegrityError,
    PyException,
    "A cube asset does not match its pin."
);
create_exception!(
    fedeval,
    ApiError,
    PyException,
    "The server refused a request; args are (code, message)."
);

fn to_py<T: serde::Serialize>(py: Python<'_>, v: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn uid(s: &str) -> PyResult<ContentUid> {
    s.parse()
        .map_err(|e: fedeval_core::uid::InvalidUid| PyValueError::new_err(e.to_string()))
}

fn verify_err(e: VerifyError) -> PyErr {
    match e {
        VerifyError::Io(e) => e.into(),
        other => IntegrityError::new_err(other.to_string()),
    }
}

fn api_err(e: AgentError) -> PyErr {
    ApiError::new_err((e.code(), e.to_string()))
}

/// SHA-256 content UID of a byte string.
#[pyfunction]
fn file_uid(data: &[u8]) -> String {
    fedeval_core::file_uid(data).to_string()
}

/// Content UID of a directory tree, as used for prepared datasets.
#[pyfunction]
fn dir_uid(path: PathBuf) -> PyResult<String> {
    fedeval_core::uid::dir_content_uid(&path)
        .map(|u| u.to_string())
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

/// The digests pinned for one cube.
#[pyclass(frozen, eq, skip_from_py_object, module = "fedeval")]
#[derive(Clone, PartialEq)]
struct Pins {
    inner: PinnedHashes,
}

#[pymethods]
impl Pins {
    #[new]
    #[pyo3(signature = (manifest_uid, image_uid, parameters_uid=None, extra_files=Vec::new()))]
    fn new(
        manifest_uid: &str,
        image_uid: &str,
        parameters_uid: Option<&str>,
        extra_files: Vec<(String, String)>,
    ) -> PyResult<Self> {
        Ok(Pins {
            inner: PinnedHashes {
                manifest_uid: uid(manifest_uid)?,
                image_uid: uid(image_uid)?,
                parameters_uid: parameters_uid.map(uid).transpose()?,
                extra_files: extra_files
                    .into_iter()
                    .map(|(p, u)| Ok((p, uid(&u)?)))
                    .collect::<PyResult<_>>()?,
            },
        })
    }

    #[getter]
    fn manifest_uid(&self) -> String {
        self.inner.manifest_uid.to_string()
    }

    #[getter]
    fn image_uid(&self) -> String {
        self.inner.image_uid.to_string()
    }

    #[getter]
    fn parameters_uid(&self) -> Option<String> {
        self.inner.parameters_uid.as_ref().map(|u| u.to_string())
    }

    #[getter]
    fn extra_files(&self) -> Vec<(String, String)> {
        self.inner
            .extra_files
            .iter()
            .map(|(p, u)| (p.clone(), u.to_string()))
            .collect()
    }

    fn to_dict(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner)
    }

    fn __repr__(&self) -> String {
        format!(
            "Pins(manifest_uid={:?}, image_uid={:?})",
            self.manifest_uid(),
            self.image_uid()
        )
    }
}

/// Pins a local cube directory: manifest, image archive, parameters and
/// the named extra files.
#[pyfunction]
#[pyo3(signature = (path, extra_files=Vec::new()))]
fn pin_cube(path: PathBuf, extra_files: Vec<String>) -> PyResult<Pins> {
    let extras: Vec<&str> = extra_files.iter().map(String::as_str).collect();
    cube::pin_cube_dir(&path, &extras)
        .map(|inner| Pins { inner })
        .map_err(verify_err)
}

/// Checks a cube directory against `pins`; returns the manifest UID or
/// raises `IntegrityError`.
#[pyfunction]
fn verify_cube(path: PathBuf, pins: &Pins) -> PyResult<String> {
    cube::verify_cube(&path, &pins.inner)
        .map(|c| c.manifest_uid().to_string())
        .map_err(verify_err)
}

/// Checks a JSON-lines audit log. Returns `None` when intact, else the
/// index of the first bad entry.
#[pyfunction]
fn verify_audit_chain(jsonl: &str) -> PyResult<Option<u64>> {
    let mut events = Vec::new();
    for (i, line) in jsonl.lines().filter(|l| !l.trim().is_empty()).enumerate() {
        match serde_json::from_str::<AuditEvent>(line) {
            Ok(e) => events.push(e),
            Err(_) => return Ok(Some(i as u64)),
        }
    }
    Ok(fedeval_core::verify_audit_chain(&events).err())
}

fn method(name: &str) -> PyResult<AggregationMethod> {
    serde_json::from_value(serde_json::Value::String(name.to_ascii_uppercase()))
        .map_err(|_| PyValueError::new_err(format!("unknown aggregation method {name:?}")))
}

/// Aggregates per-site `(value, sample_count)` pairs with one of
/// WEIGHTED_MEAN, UNWEIGHTED_MEAN, MIN or MAX.
#[pyfunction]
#[pyo3(signature = (sites, method_name="WEIGHTED_MEAN"))]
fn aggregate(sites: Vec<(f64, u64)>, method_name: &str) -> PyResult<f64> {
    let m = method(method_name)?;
    let placeholder = fedeval_core::file_uid(b"");
    let results: Vec<EvaluationResult> = sites
        .iter()
        .enumerate()
        .map(|(i, &(v, n))| EvaluationResult {
            id: ResultId::new(format!("site-{i}")),
            benchmark_id: BenchmarkId::new("-"),
            dataset_uid: placeholder.clone(),
            model_cube_id: CubeId::new("-"),
            metrics: [("value".to_string(), v)].into(),
            sample_count: n,
            executed_hashes: ExecutedHashes {
                prep: placeholder.clone(),
                model: placeholder.clone(),
                metrics_cube: placeholder.clone(),
            },
            operator_id: AccountId::new("-"),
            model_approved_at: Timestamp::from_unix(0),
            result_approved_at: Timestamp::from_unix(0),
            uploaded_at: Timestamp::from_unix(0),
        })
        .collect();
    let spec = MetricSpec {
        name: "value".into(),
        range: MetricRange {
            min: f64::MIN,
            max: f64::MAX,
        },
        higher_is_better: true,
        decomposable: true,
        aggregation: m,
    };
    fedeval_core::aggregate_results(&results, &spec, m)
        .map(|a| a.value)
        .map_err(|e| PyValueError::new_err(format!("{}: {e}", e.code())))
}

/// `benchmark:dataset_uid:model`, the key agents use for a task.
#[pyfunction]
fn task_key(benchmark_id: &str, dataset_uid: &str, model_cube_id: &str) -> PyResult<String> {
    Ok(sheets::task_key(&EvaluationTask {
        benchmark_id: BenchmarkId::new(benchmark_id),
        dataset_uid: uid(dataset_uid)?,
        model_cube_id: CubeId::new(model_cube_id),
    }))
}

#[pyfunction]
fn parse_task_key(key: &str) -> Option<(String, String, String)> {
    sheets::parse_task_key(key).map(|t| {
        (
            t.benchmark_id.to_string(),
            t.dataset_uid.to_string(),
            t.model_cube_id.to_string(),
        )
    })
}

/// Read access to a registry server.
#[pyclass(frozen, module = "fedeval")]
struct Client {
    inner: ApiClient,
}

#[pymethods]
impl Client {
    #[new]
    #[pyo3(signature = (url, token=None))]
    fn new(url: &str, token: Option<String>) -> Self {
        Client {
            inner: ApiClient::new(Arc::new(HttpTransport::new(url)), token),
        }
    }

    fn benchmark(&self, py: Python<'_>, id: &str) -> PyResult<Py<PyAny>> {
        let b = py
            .detach(|| self.inner.benchmark(&BenchmarkId::new(id)))
            .map_err(api_err)?;
        to_py(py, &b)
    }

    fn cube(&self, py: Python<'_>, id: &str) -> PyResult<Py<PyAny>> {
        let c = py
            .detach(|| self.inner.cube(&CubeId::new(id)))
            .map_err(api_err)?;
        to_py(py, &c)
    }

    /// The leaderboard as this caller may see it.
    fn results(&self, py: Python<'_>, benchmark_id: &str) -> PyResult<Py<PyAny>> {
        let r = py
            .detach(|| self.inner.results(&BenchmarkId::new(benchmark_id)))
            .map_err(api_err)?;
        to_py(py, &r)
    }

    fn pending(&self, py: Python<'_>, dataset_uid: &str) -> PyResult<Py<PyAny>> {
        let u = uid(dataset_uid)?;
        let p = py.detach(|| self.inner.pending(&u)).map_err(api_err)?;
        to_py(py, &p)
    }

    #[pyo3(signature = (from_seq=0))]
    fn audit(&self, py: Python<'_>, from_seq: u64) -> PyResult<Py<PyAny>> {
        let page = py.detach(|| self.inner.audit(from_seq)).map_err(api_err)?;
        to_py(py, &page)
    }
}

#[pymodule]
fn fedeval(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(file_uid, m)?)?;
    m.add_function(wrap_pyfunction!(dir_uid, m)?)?;
    m.add_function(wrap_pyfunction!(pin_cube, m)?)?;
    m.add_function(wrap_pyfunction!(verify_cube, m)?)?;
    m.add_function(wrap_pyfunction!(verify_audit_chain, m)?)?;
    m.add_function(wrap_pyfunction!(aggregate, m)?)?;
    m.add_function(wrap_pyfunction!(task_key, m)?)?;
    m.add_function(wrap_pyfunction!(parse_task_key, m)?)?;
    m.add_class::<Pins>()?;
    m.add_class::<Client>()?;
    m.add("IntegrityError", m.py().get_type::<IntegrityError>())?;
    m.add("ApiError", m.py().get_type::<ApiError>())?;
    Ok(())
}
