//! Python bindings for the `oldroyd` solver.
//!
//! Records (reports, ledgers, configurations) cross the boundary as plain dicts;
//! fields come back as flat lists in grid order.

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use pyo3::IntoPyObjectExt;
use serde::Serialize;
use serde_json::Value;

use oldroyd::constitutive::{self, ModelParams};
use oldroyd::diagnostics;
use oldroyd::io::{self, RunConfig};
use oldroyd::tensor;
use oldroyd::Error;

create_exception!(oldroyd_py, OldroydError, PyException, "Base class for solver errors.");
create_exception!(oldroyd_py, ConfigError, OldroydError, "Invalid configuration or parameters.");
create_exception!(oldroyd_py, BarrierError, OldroydError, "Divergence left the admissible interval.");
create_exception!(oldroyd_py, NonconvergenceError, OldroydError, "Fixed-point iteration failed.");

fn py_err(e: Error) -> PyErr {
    let msg = e.to_string();
    match e {
        Error::Config { .. } => ConfigError::new_err(msg),
        Error::Barrier { .. } => BarrierError::new_err(msg),
        Error::Nonconvergence { .. } => NonconvergenceError::new_err(msg),
        Error::Domain(_) => PyValueError::new_err(msg),
        _ => OldroydError::new_err(msg),
    }
}

fn json_to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    match v {
        Value::Null => Ok(py.None().into_bound(py)),
        Value::Bool(b) => b.into_bound_py_any(py),
        Value::Number(n) => match n.as_i64() {
            Some(i) => i.into_bound_py_any(py),
            None => n.as_f64().unwrap_or(f64::NAN).into_bound_py_any(py),
        },
        Value::String(s) => s.into_bound_py_any(py),
        Value::Array(a) => {
            let items = a.iter().map(|x| json_to_py(py, x)).collect::<PyResult<Vec<_>>>()?;
            PyList::new(py, items)?.into_bound_py_any(py)
        }
        Value::Object(m) => {
            let d = PyDict::new(py);
            for (k, x) in m {
                d.set_item(k, json_to_py(py, x)?)?;
            }
            d.into_bound_py_any(py)
        }
    }
}

fn to_py<'py, T: Serialize>(py: Python<'py>, x: &T) -> PyResult<Bound<'py, PyAny>> {
    let v = serde_json::to_value(x).map_err(|e| OldroydError::new_err(e.to_string()))?;
    json_to_py(py, &v)
}

/// Model parameters; keyword arguments override the defaults.
#[pyclass(name = "Params", from_py_object)]
#[derive(Clone)]
struct PyParams {
    inner: ModelParams,
}

#[pymethods]
impl PyParams {
    #[new]
    #[pyo3(signature = (**kwargs))]
    fn new(kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let mut v = serde_json::to_value(ModelParams::default()).expect("params serialize");
        if let Some(kw) = kwargs {
            for (k, x) in kw.iter() {
                let key: String = k.extract()?;
                let val: f64 = x.extract()?;
                v[key.as_str()] = serde_json::json!(val);
            }
        }
        let inner: ModelParams = serde_json::from_value(v).map_err(|e| ConfigError::new_err(e.to_string()))?;
        inner.validate().map_err(py_err)?;
        Ok(PyParams { inner })
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner)
    }

    #[getter]
    fn div_bound(&self) -> f64 {
        self.inner.div_bound()
    }

    fn __repr__(&self) -> String {
        format!("Params({})", serde_json::to_string(&self.inner).expect("params serialize"))
    }
}

/// Small symmetric matrix (2x2 or 3x3).
#[pyclass(name = "SymMat", from_py_object)]
#[derive(Clone)]
struct PySymMat {
    inner: tensor::SymMat,
}

#[pymethods]
impl PySymMat {
    /// Builds from a nested list; the upper triangle is used.
    #[new]
    fn new(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        let d = rows.len();
        if !(d == 2 || d == 3) || rows.iter().any(|r| r.len() != d) {
            return Err(PyValueError::new_err("expected a 2x2 or 3x3 nested list"));
        }
        let mut m = tensor::SymMat::zeros(d);
        for i in 0..d {
            for j in i..d {
                m.set(i, j, rows[i][j]);
            }
        }
        Ok(PySymMat { inner: m })
    }

    fn to_list(&self) -> Vec<Vec<f64>> {
        let d = self.inner.dim();
        (0..d).map(|i| (0..d).map(|j| self.inner.get(i, j)).collect()).collect()
    }

    fn trace(&self) -> f64 {
        self.inner.trace()
    }

    /// Eigenvalues in ascending order.
    fn eigenvalues(&self) -> Vec<f64> {
        let mut v = tensor::eig_sym(&self.inner).values().to_vec();
        v.sort_by(f64::total_cmp);
        v
    }

    fn log(&self) -> PyResult<PySymMat> {
        tensor::log_spd(&self.inner).map(|inner| PySymMat { inner }).map_err(py_err)
    }

    fn exp(&self) -> PySymMat {
        PySymMat {
            inner: tensor::exp_sym(&self.inner),
        }
    }

    fn chi_sigma(&self, sigma: f64) -> PySymMat {
        PySymMat {
            inner: tensor::chi_sigma(&self.inner, sigma),
        }
    }

    fn trace_g_sigma(&self, sigma: f64) -> f64 {
        tensor::trace_g_sigma(&self.inner, sigma)
    }

    fn deviatoric(&self) -> PySymMat {
        PySymMat {
            inner: tensor::deviatoric(&self.inner.to_square()),
        }
    }

    fn min_eig(&self) -> f64 {
        tensor::min_eig(&self.inner)
    }

    fn __repr__(&self) -> String {
        format!("SymMat({:?})", self.to_list())
    }
}

/// `(p, H, H')` of the fluid pressure law at density `rho`.
#[pyfunction]
fn fluid_pressure(rho: f64, params: &PyParams) -> PyResult<(f64, f64, f64)> {
    let l = constitutive::fluid_pressure(rho, &params.inner).map_err(py_err)?;
    Ok((l.p, l.potential, l.dpotential))
}

/// `(q, G, G')` of the polymer laws at `eta`.
#[pyfunction]
fn polymer_laws(eta: f64, params: &PyParams) -> PyResult<(f64, f64, f64)> {
    let l = constitutive::polymer_laws(eta, &params.inner).map_err(py_err)?;
    Ok((l.q, l.g, l.dg))
}

/// `(Lambda, Lambda')` at divergence `z`.
#[pyfunction]
#[pyo3(signature = (z, params, regularized = false))]
fn barrier(z: f64, params: &PyParams, regularized: bool) -> PyResult<(f64, f64)> {
    let b = constitutive::barrier(z, &params.inner, regularized).map_err(py_err)?;
    Ok((b.lam, b.lam_prime))
}

/// Viscous stress for a deviatoric strain and a divergence.
#[pyfunction]
#[pyo3(signature = (dd, div_u, params, regularized = false))]
fn viscous_stress(dd: &PySymMat, div_u: f64, params: &PyParams, regularized: bool) -> PyResult<PySymMat> {
    constitutive::viscous_stress(&dd.inner, div_u, &params.inner, regularized)
        .map(|inner| PySymMat { inner })
        .map_err(py_err)
}

/// Parses a JSON configuration and returns it with all defaults filled in.
#[pyfunction]
#[pyo3(signature = (text, overrides = Vec::new()))]
fn parse_config<'py>(py: Python<'py>, text: &str, overrides: Vec<String>) -> PyResult<Bound<'py, PyAny>> {
    let cfg = io::parse_config_with_overrides(text, &overrides).map_err(py_err)?;
    to_py(py, &cfg)
}

/// Runs a configuration into `out_dir` and returns the terminal status.
#[pyfunction]
fn run<'py>(py: Python<'py>, config: &str, out_dir: &str) -> PyResult<Bound<'py, PyAny>> {
    let cfg = io::parse_config(config).map_err(py_err)?;
    let outcome = py
        .detach(|| io::run_in(&cfg, std::path::Path::new(out_dir)))
        .map_err(py_err)?;
    to_py(py, &outcome.status)
}

/// A scenario state advanced step by step.
#[pyclass(name = "Simulation")]
struct PySimulation {
    inner: io::Simulation,
}

fn flat(f: &oldroyd::ScalarField) -> Vec<f64> {
    f.values().into_owned()
}

#[pymethods]
impl PySimulation {
    #[new]
    #[pyo3(signature = (config = "{}"))]
    fn new(config: &str) -> PyResult<Self> {
        let cfg: RunConfig = io::parse_config(config).map_err(py_err)?;
        let inner = io::Simulation::new(cfg).map_err(py_err)?;
        Ok(PySimulation { inner })
    }

    #[getter]
    fn time(&self) -> f64 {
        self.inner.state.time
    }

    #[getter]
    fn step_index(&self) -> usize {
        self.inner.step_index
    }

    /// `(dim, n)` of the grid.
    #[getter]
    fn shape(&self) -> (usize, usize) {
        (self.inner.grid().dim(), self.inner.grid().n())
    }

    /// Advances `count` output steps and returns the last step report.
    #[pyo3(signature = (count = 1))]
    fn step<'py>(&mut self, py: Python<'py>, count: usize) -> PyResult<Bound<'py, PyAny>> {
        let sim = &mut self.inner;
        let report = py
            .detach(|| {
                let mut last = Default::default();
                for _ in 0..count {
                    last = sim.advance_step()?;
                }
                Ok::<_, Error>(last)
            })
            .map_err(py_err)?;
        to_py(py, &report)
    }

    fn ledger<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let f = self.inner.forcing().body_force(self.inner.grid(), self.inner.state.time);
        to_py(py, &diagnostics::energy_ledger_with_force(&self.inner.state, f.as_ref()))
    }

    fn positivity<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &diagnostics::positivity_report(&self.inner.state))
    }

    /// Relative entropy of this state with respect to `other`, resampled onto this grid.
    fn relative_entropy<'py>(&self, py: Python<'py>, other: &PySimulation) -> PyResult<Bound<'py, PyAny>> {
        let a = &self.inner.state;
        let b = &other.inner.state;
        let b = if a.grid() == b.grid() { b.clone() } else { b.resample(a.grid()).map_err(py_err)? };
        to_py(py, &diagnostics::relative_entropy(a, &b).map_err(py_err)?)
    }

    fn rho(&self) -> Vec<f64> {
        flat(&self.inner.state.rho)
    }

    fn eta(&self) -> Vec<f64> {
        flat(&self.inner.state.eta)
    }

    /// Velocity components.
    fn u(&self) -> Vec<Vec<f64>> {
        self.inner.state.u.comps.iter().map(flat).collect()
    }

    /// Stress upper-triangle components, row by row.
    fn stress(&self) -> Vec<Vec<f64>> {
        self.inner.state.stress.comps.iter().map(flat).collect()
    }

    /// Writes the current state as a snapshot set.
    fn save(&self, dir: &str) -> PyResult<()> {
        io::write_state(std::path::Path::new(dir), &self.inner.state).map_err(py_err)
    }
}

/// Registers the module contents; shared by the extension entry point and embedding tests.
pub fn register(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add("OldroydError", py.get_type::<OldroydError>())?;
    m.add("ConfigError", py.get_type::<ConfigError>())?;
    m.add("BarrierError", py.get_type::<BarrierError>())?;
    m.add("NonconvergenceError", py.get_type::<NonconvergenceError>())?;
    m.add_class::<PyParams>()?;
    m.add_class::<PySymMat>()?;
    m.add_class::<PySimulation>()?;
    m.add_function(wrap_pyfunction!(fluid_pressure, m)?)?;
    m.add_function(wrap_pyfunction!(polymer_laws, m)?)?;
    m.add_function(wrap_pyfunction!(barrier, m)?)?;
    m.add_function(wrap_pyfunction!(viscous_stress, m)?)?;
    m.add_function(wrap_pyfunction!(parse_config, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}

#[pymodule]
fn oldroyd_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    register(m)
}
