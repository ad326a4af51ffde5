//! Python bindings: special functions, exact solutions, preset runs and
//! diagnostic checks.

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use feller_core::analytic::{self, SteadyStateParams, SymmetryKind};
use feller_core::experiment::{self, Check, Family, Preset, RunConfig};
use feller_core::specfun::{self, SeriesControl};
use feller_core::{FellerError, FellerParams};

fn to_py(err: FellerError) -> PyErr {
    match err {
        FellerError::Io(e) => PyOSError::new_err(e.to_string()),
        FellerError::InvalidConfig(_)
        | FellerError::Parse { .. }
        | FellerError::Domain { .. }
        | FellerError::DegenerateGrid { .. }
        | FellerError::TailNotReached { .. } => PyValueError::new_err(err.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

/// Drift `gamma` and diffusion `eta` of `p_t = [x (gamma p + eta p_x)]_x`.
#[pyclass(name = "Params", frozen, skip_from_py_object)]
#[derive(Clone, Copy)]
struct PyParams {
    inner: FellerParams,
}

#[pymethods]
impl PyParams {
    #[new]
    fn new(gamma: f64, eta: f64) -> PyResult<Self> {
        Ok(PyParams {
            inner: FellerParams::new(gamma, eta).map_err(to_py)?,
        })
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.inner.gamma
    }

    #[getter]
    fn eta(&self) -> f64 {
        self.inner.eta
    }

    fn __repr__(&self) -> String {
        format!("Params(gamma={}, eta={})", self.inner.gamma, self.inner.eta)
    }
}

#[pyfunction]
fn exp_integral_e1(x: f64) -> PyResult<f64> {
    specfun::exp_integral_e1(x).map_err(to_py)
}

/// Principal value of Ei.
#[pyfunction]
fn exp_integral_ei(x: f64) -> PyResult<f64> {
    specfun::exp_integral_ei(x).map_err(to_py)
}

#[pyfunction]
fn kummer_m(a: f64, b: f64, z: f64) -> PyResult<f64> {
    specfun::kummer_m(a, b, z, &SeriesControl::default()).map_err(to_py)
}

#[pyfunction]
fn steady_state_p(params: &PyParams, c1: f64, c2: f64, x: f64) -> PyResult<f64> {
    analytic::steady_state_p(&params.inner, &SteadyStateParams { c1, c2 }, x).map_err(to_py)
}

#[pyfunction]
fn physical_flux(params: &PyParams, x: f64, p: f64, p_x: f64) -> f64 {
    analytic::physical_flux(&params.inner, x, p, p_x)
}

/// Reconstructed density at one output time. `p[k]` belongs to the cell
/// `[x[k], x[k+1]]`.
#[pyclass(name = "Snapshot", frozen, get_all)]
struct PySnapshot {
    t: f64,
    cumulative: Vec<f64>,
    x: Vec<f64>,
    y: Vec<f64>,
    p: Vec<f64>,
    mass: f64,
    m1: f64,
}

impl From<&feller_core::Snapshot> for PySnapshot {
    fn from(s: &feller_core::Snapshot) -> Self {
        PySnapshot {
            t: s.t,
            cumulative: s.cumulative.clone(),
            x: s.x.clone(),
            y: s.y.clone(),
            p: s.p.clone(),
            mass: s.mass,
            m1: s.m1,
        }
    }
}

#[pymethods]
impl PySnapshot {
    fn __repr__(&self) -> String {
        format!(
            "Snapshot(t={}, nodes={}, mass={}, m1={})",
            self.t,
            self.x.len(),
            self.mass,
            self.m1
        )
    }
}

/// Outcome of a Lagrangian run.
#[pyclass(name = "Run", frozen)]
struct PyRun {
    #[pyo3(get)]
    snapshots: Vec<Py<PySnapshot>>,
    summary: experiment::RunSummary,
}

#[pymethods]
impl PyRun {
    #[getter]
    fn accepted_steps(&self) -> usize {
        self.summary.accepted_steps
    }

    #[getter]
    fn rejected_steps(&self) -> usize {
        self.summary.rejected_steps
    }

    #[getter]
    fn support_ratio(&self) -> f64 {
        self.summary.support_ratio
    }

    #[getter]
    fn total_probability(&self) -> f64 {
        self.summary.total_probability
    }

    #[getter]
    fn max_moment_rel_error(&self) -> f64 {
        self.summary.max_moment_rel_error
    }

    /// The run summary as a JSON document.
    fn summary_json(&self) -> String {
        serde_json::to_string(&self.summary).expect("summary serializes")
    }
}

fn parse_preset(name: &str) -> PyResult<Preset> {
    name.parse::<Preset>().map_err(to_py)
}

/// JSON configuration of a built-in preset (`steady`, `expand`, `confine`).
#[pyfunction]
fn preset_config(name: &str) -> PyResult<String> {
    Ok(parse_preset(name)?.config().to_json())
}

/// Integrates a JSON run configuration. The GIL is released meanwhile.
#[pyfunction]
fn run(py: Python<'_>, config: &str) -> PyResult<PyRun> {
    let cfg = RunConfig::from_json(config).map_err(to_py)?;
    let outcome = py
        .detach(|| experiment::run_lagrangian(&cfg, None))
        .map_err(to_py)?;
    let snapshots = outcome
        .snapshots
        .iter()
        .map(|s| Py::new(py, PySnapshot::from(s)))
        .collect::<PyResult<Vec<_>>>()?;
    Ok(PyRun {
        snapshots,
        summary: outcome.summary,
    })
}

#[pyfunction]
fn run_preset(py: Python<'_>, name: &str) -> PyResult<PyRun> {
    run(py, &parse_preset(name)?.config().to_json())
}

/// Runs one diagnostic check and returns `(passed, report_csv)`.
///
/// `check` is one of `residual`, `symmetry`, `conservation`, `oracle`,
/// `mc`; the preset supplies the run for the last three.
#[pyfunction]
#[pyo3(signature = (check, preset = "expand", seed = 20_240_601, paths = 1_000_000))]
fn diagnose(
    py: Python<'_>,
    check: &str,
    preset: &str,
    seed: u64,
    paths: usize,
) -> PyResult<(bool, String)> {
    let cfg = parse_preset(preset)?.config();
    let check = match check {
        "residual" => Check::Residual(Family::ALL.to_vec()),
        "symmetry" => Check::Symmetry(SymmetryKind::ALL.to_vec()),
        "conservation" => Check::Conservation,
        "oracle" => Check::Oracle,
        "mc" => Check::Mc { paths },
        other => return Err(PyValueError::new_err(format!("unknown check '{other}'"))),
    };
    let report = py
        .detach(|| experiment::run_diagnostics(&check, &cfg, seed))
        .map_err(to_py)?;
    Ok((report.passed(), report.to_csv()))
}

#[pymodule]
fn feller(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyParams>()?;
    m.add_class::<PySnapshot>()?;
    m.add_class::<PyRun>()?;
    m.add_function(wrap_pyfunction!(exp_integral_e1, m)?)?;
    m.add_function(wrap_pyfunction!(exp_integral_ei, m)?)?;
    m.add_function(wrap_pyfunction!(kummer_m, m)?)?;
    m.add_function(wrap_pyfunction!(steady_state_p, m)?)?;
    m.add_function(wrap_pyfunction!(physical_flux, m)?)?;
    m.add_function(wrap_pyfunction!(preset_config, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(run_preset, m)?)?;
    m.add_function(wrap_pyfunction!(diagnose, m)?)?;
    Ok(())
}
