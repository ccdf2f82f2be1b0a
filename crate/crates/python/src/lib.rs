//! Python bindings: metrics helpers, cost estimation, campaigns, reports and
//! an embeddable emulated target.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, OnceLock};

use posbench::cli::commands::{cmd_report, cmd_run, CliError, RunOverrides};
use posbench::cli::config::parse_config;
use posbench::costs::{estimate_cost as estimate, load_pricing, PricingCatalog, UsageRecord};
use posbench::metrics;
use posbench::target::{http, EmulationProfile, PosService, ServiceOptions};
use posbench::workload::{sample_operation, user_rng, Catalog, WorkloadMix};
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use tokio::runtime::Runtime;

create_exception!(posbench, PosbenchError, PyException);

fn runtime() -> &'static Runtime {
    static RT: OnceLock<Runtime> = OnceLock::new();
    RT.get_or_init(|| {
        tokio::runtime::Builder::new_multi_thread()
            .enable_all()
            .build()
            .expect("tokio runtime")
    })
}

fn cli_err(e: CliError) -> PyErr {
    PosbenchError::new_err((e.to_string(), e.exit_code()))
}

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Nearest-rank percentile of `latencies` (0 < p <= 100).
#[pyfunction]
fn percentile(latencies: Vec<f64>, p: f64) -> PyResult<f64> {
    metrics::percentile(&latencies, p).map_err(value_err)
}

/// Percentage by which `comparison` is below `baseline`.
#[pyfunction]
fn relative_difference(baseline: f64, comparison: f64) -> PyResult<f64> {
    metrics::relative_difference(baseline, comparison).map_err(value_err)
}

/// Cost of `api_calls` calls and `egress_bytes` bytes on `platform`.
/// Money values are exact decimal strings.
#[pyfunction]
#[pyo3(signature = (platform, api_calls, egress_bytes, pricing=None))]
fn estimate_cost<'py>(
    py: Python<'py>,
    platform: &str,
    api_calls: u64,
    egress_bytes: u64,
    pricing: Option<PathBuf>,
) -> PyResult<Bound<'py, PyDict>> {
    let catalog = match pricing {
        Some(p) => load_pricing(&p).map_err(value_err)?,
        None => PricingCatalog::default(),
    };
    let usage = UsageRecord {
        platform_label: platform.to_string(),
        api_calls,
        egress_bytes,
    };
    let e = estimate(&usage, &catalog).map_err(value_err)?;
    let d = PyDict::new(py);
    d.set_item("platform", &e.platform_label)?;
    d.set_item("api_calls", e.api_calls)?;
    d.set_item("egress_bytes", e.egress_bytes)?;
    d.set_item("call_cost_usd", e.call_cost_usd.to_decimal_string(2))?;
    d.set_item("egress_cost_usd", e.egress_cost_usd.to_decimal_string(2))?;
    d.set_item("total_usd", e.total_usd.to_decimal_string(2))?;
    Ok(d)
}

/// Names of the first `n` operations user `user` draws under the default mix.
#[pyfunction]
#[pyo3(signature = (seed, n, user=0))]
fn sample_operations(seed: u64, n: usize, user: u64) -> PyResult<Vec<String>> {
    let catalog = Catalog::pos_default();
    let mix = WorkloadMix::default();
    let mut rng = user_rng(seed, user);
    (0..n)
        .map(|_| sample_operation(&catalog, &mix, &mut rng).map(|s| s.name.clone()).map_err(value_err))
        .collect()
}

/// Runs the campaign in `config` and returns the raw results directory.
#[pyfunction]
#[pyo3(signature = (config, out_dir=None, desk_scale=false, seed=None))]
fn run_campaign(py: Python<'_>, config: PathBuf, out_dir: Option<PathBuf>, desk_scale: bool, seed: Option<u64>) -> PyResult<String> {
    let resolved = parse_config(&config).map_err(|e| cli_err(e.into()))?;
    let overrides = RunOverrides {
        desk_scale,
        seed,
        out_dir,
    };
    let outcome = py
        .detach(|| runtime().block_on(cmd_run(resolved, overrides)))
        .map_err(cli_err)?;
    Ok(outcome.raw_dir.to_string_lossy().into_owned())
}

/// Builds tables, figures and a summary from `raw_dir` into `out_dir`.
#[pyfunction]
#[pyo3(signature = (raw_dir, out_dir, pricing=None))]
fn build_report<'py>(
    py: Python<'py>,
    raw_dir: PathBuf,
    out_dir: PathBuf,
    pricing: Option<PathBuf>,
) -> PyResult<Bound<'py, PyDict>> {
    let outcome = py
        .detach(|| cmd_report(&raw_dir, &out_dir, pricing.as_deref()))
        .map_err(cli_err)?;
    let d = PyDict::new(py);
    d.set_item("files", outcome.files)?;
    d.set_item("warnings", outcome.warnings)?;
    d.set_item("summary", outcome.summary)?;
    Ok(d)
}

/// An emulated POS target served over HTTP from a background thread.
#[pyclass(module = "posbench")]
struct Server {
    url: String,
    inner: Mutex<Option<http::RunningServer>>,
}

#[pymethods]
impl Server {
    /// `profile` is a builtin name ("paper-gcp", "paper-azure", "instant")
    /// or a profile JSON file. Port 0 picks a free port.
    #[new]
    #[pyo3(signature = (profile="paper-gcp", port=0))]
    fn new(py: Python<'_>, profile: &str, port: u16) -> PyResult<Self> {
        let profile = EmulationProfile::resolve(profile).map_err(value_err)?;
        let service = Arc::new(PosService::new(ServiceOptions::with_profile(profile)));
        let running = py
            .detach(|| runtime().block_on(http::spawn(service, SocketAddr::from(([127, 0, 0, 1], port)))))
            .map_err(|e| PosbenchError::new_err((format!("port {port}: {e}"), 5)))?;
        Ok(Server {
            url: running.base_url(),
            inner: Mutex::new(Some(running)),
        })
    }

    #[getter]
    fn url(&self) -> &str {
        &self.url
    }

    fn stop(&self, py: Python<'_>) -> PyResult<()> {
        let running = self.inner.lock().expect("server lock").take();
        if let Some(s) = running {
            py.detach(|| runtime().block_on(s.stop()))
                .map_err(|e| PosbenchError::new_err((e.to_string(), 1)))?;
        }
        Ok(())
    }

    fn __enter__(slf: Py<Self>) -> Py<Self> {
        slf
    }

    fn __exit__(&self, py: Python<'_>, _t: Py<PyAny>, _v: Py<PyAny>, _tb: Py<PyAny>) -> PyResult<bool> {
        self.stop(py)?;
        Ok(false)
    }

    fn __repr__(&self) -> String {
        format!("Server(url={:?})", self.url)
    }
}

#[pymodule(name = "posbench")]
fn posbench_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("PosbenchError", m.py().get_type::<PosbenchError>())?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(percentile, m)?)?;
    m.add_function(wrap_pyfunction!(relative_difference, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_cost, m)?)?;
    m.add_function(wrap_pyfunction!(sample_operations, m)?)?;
    m.add_function(wrap_pyfunction!(run_campaign, m)?)?;
    m.add_function(wrap_pyfunction!(build_report, m)?)?;
    m.add_class::<Server>()?;
    Ok(())
}
