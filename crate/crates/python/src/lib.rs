//! Python bindings for `ddspin`.

use ddspin::config::RunConfig;
use ddspin::exact::{self, bimodality_index as core_bimodality, MagnetizationDistribution};
use ddspin::meanfield::{self, Stability};
use ddspin::mfqf::{self, CorrelationObservables, MfqfOptions, MfqfState};
use ddspin::sweep::{self, SteadyStateRecord};
use ddspin::{Axis, BlochVector, Boundary, InteractionKind, SweepParameter};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err(e: ddspin::Error) -> PyErr {
    match e {
        ddspin::Error::Config(_)
        | ddspin::Error::InvalidParams(_)
        | ddspin::Error::InvalidLattice(_)
        | ddspin::Error::Capacity(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn parse<T: std::str::FromStr>(what: &str, s: &str) -> PyResult<T>
where
    T::Err: std::fmt::Display,
{
    s.parse().map_err(|e| PyValueError::new_err(format!("{what}: {e}")))
}

fn triple(mu: BlochVector) -> (f64, f64, f64) {
    (mu.x, mu.y, mu.z)
}

/// Drive, detuning and coupling in units of the decay rate.
#[pyclass(name = "ModelParams", module = "ddspin_py", skip_from_py_object)]
#[derive(Clone)]
struct PyModelParams {
    inner: ddspin::ModelParams,
}

#[pymethods]
impl PyModelParams {
    #[new]
    #[pyo3(signature = (kind, delta, omega, coupling, gamma = 1.0))]
    fn new(kind: &str, delta: f64, omega: f64, coupling: f64, gamma: f64) -> PyResult<Self> {
        let kind: InteractionKind = parse("kind", kind)?;
        let inner = ddspin::ModelParams::new(delta, omega, coupling, gamma, kind).map_err(err)?;
        Ok(PyModelParams { inner })
    }

    #[staticmethod]
    fn xy(delta: f64, omega: f64, coupling: f64) -> PyResult<Self> {
        Self::new("xy", delta, omega, coupling, 1.0)
    }

    #[staticmethod]
    fn ising(delta: f64, omega: f64, coupling: f64) -> PyResult<Self> {
        Self::new("ising", delta, omega, coupling, 1.0)
    }

    #[getter]
    fn kind(&self) -> String {
        self.inner.kind.to_string()
    }
    #[getter]
    fn delta(&self) -> f64 {
        self.inner.delta
    }
    #[getter]
    fn omega(&self) -> f64 {
        self.inner.omega
    }
    #[getter]
    fn coupling(&self) -> f64 {
        self.inner.coupling
    }
    #[getter]
    fn gamma(&self) -> f64 {
        self.inner.gamma
    }

    /// Copy with `parameter` ("delta", "omega", "coupling") set to `value`.
    fn with_value(&self, parameter: &str, value: f64) -> PyResult<Self> {
        let which: SweepParameter = parse("parameter", parameter)?;
        Ok(PyModelParams {
            inner: self.inner.with(which, value),
        })
    }

    fn __repr__(&self) -> String {
        let p = &self.inner;
        format!(
            "ModelParams(kind='{}', delta={}, omega={}, coupling={}, gamma={})",
            p.kind, p.delta, p.omega, p.coupling, p.gamma
        )
    }
}

#[pyclass(name = "Lattice", module = "ddspin_py", skip_from_py_object)]
#[derive(Clone)]
struct PyLattice {
    inner: ddspin::LatticeSpec,
}

#[pymethods]
impl PyLattice {
    /// Periodic hypercubic box of linear size `l`.
    #[staticmethod]
    fn cubic(dim: usize, l: usize) -> PyResult<Self> {
        Ok(PyLattice {
            inner: ddspin::LatticeSpec::cubic(dim, l).map_err(err)?,
        })
    }

    #[staticmethod]
    #[pyo3(signature = (n, periodic = true))]
    fn chain(n: usize, periodic: bool) -> PyResult<Self> {
        let b = if periodic { Boundary::Periodic } else { Boundary::Open };
        Ok(PyLattice {
            inner: ddspin::LatticeSpec::chain(n, b).map_err(err)?,
        })
    }

    #[staticmethod]
    fn fully_connected(n: usize) -> PyResult<Self> {
        Ok(PyLattice {
            inner: ddspin::LatticeSpec::fully_connected(n).map_err(err)?,
        })
    }

    #[getter]
    fn num_sites(&self) -> usize {
        self.inner.num_sites()
    }

    #[getter]
    fn connectivity(&self) -> usize {
        self.inner.connectivity()
    }

    #[getter]
    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    fn __repr__(&self) -> String {
        format!("Lattice({:?})", self.inner.geometry())
    }
}

/// Meanfield fixed points as `(mu, stability, slowest_rate)` tuples.
#[pyfunction]
fn mf_fixed_points(params: &PyModelParams, z: f64) -> PyResult<Vec<((f64, f64, f64), String, f64)>> {
    let set = meanfield::mf_fixed_points(&params.inner, z).map_err(err)?;
    Ok(set
        .points
        .iter()
        .map(|f| {
            let s = match f.stability {
                Stability::Stable => "stable",
                Stability::Unstable => "unstable",
                Stability::Marginal => "marginal",
            };
            (triple(f.mu), s.to_string(), f.slowest_rate())
        })
        .collect())
}

/// Intervals of `grid` with two or more stable meanfield fixed points.
#[pyfunction]
fn mf_bistability_scan(params: &PyModelParams, parameter: &str, grid: Vec<f64>, z: f64) -> PyResult<Vec<(f64, f64)>> {
    let which: SweepParameter = parse("parameter", parameter)?;
    let scan = meanfield::mf_bistability_scan(&params.inner, which, &grid, z).map_err(err)?;
    Ok(scan.region.intervals)
}

fn record_dict<'py>(py: Python<'py>, r: &SteadyStateRecord) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("value", r.value())?;
    d.set_item("direction", r.direction.to_string())?;
    d.set_item("mu", triple(r.mu))?;
    d.set_item("kappa", r.kappa)?;
    d.set_item("lambda", r.lambda.to_vec())?;
    d.set_item("sigma", r.sigma.to_vec())?;
    d.set_item("b_x", r.b_x)?;
    d.set_item("converged", r.converged)?;
    d.set_item("residual", r.residual)?;
    d.set_item("error", r.error.clone())?;
    d.set_item(
        "distribution",
        r.distribution.as_ref().map(|x| x.probabilities.clone()),
    )?;
    Ok(d)
}

/// Run the sweep described by a JSON run config (the CLI format). Returns
/// `(records, intervals)`; `overrides` are `key.path=value` strings.
#[pyfunction]
#[pyo3(signature = (config_json, overrides = None))]
fn run_sweep<'py>(
    py: Python<'py>,
    config_json: &str,
    overrides: Option<Vec<String>>,
) -> PyResult<(Vec<Bound<'py, PyDict>>, Vec<(f64, f64)>)> {
    let cfg = RunConfig::from_json(config_json, &overrides.unwrap_or_default()).map_err(err)?;
    let plan = cfg.sweep_plan().map_err(err)?;
    let records = py.detach(|| sweep::run_sweep(&plan)).map_err(err)?;
    let diagram = sweep::detect_branches(&records).map_err(err)?;
    let dicts = records.iter().map(|r| record_dict(py, r)).collect::<PyResult<_>>()?;
    Ok((dicts, diagram.intervals))
}

/// Exact steady state: dict with `mu`, `b`, `probabilities`, `residual`.
#[pyfunction]
#[pyo3(signature = (lattice, params, axis = "x"))]
fn exact_steady_state<'py>(
    py: Python<'py>,
    lattice: &PyLattice,
    params: &PyModelParams,
    axis: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let axis: Axis = parse("axis", axis)?;
    let (lat, p) = (lattice.inner.clone(), params.inner);
    let (mu, dist, residual) = py
        .detach(|| -> ddspin::Result<_> {
            let l = exact::build_liouvillian(&lat, &p)?;
            let ss = exact::steady_state_with(&l, &exact::SteadyOptions::default(), None)?;
            Ok((ss.rho.mean_bloch(), exact::magnetization_distribution(&ss.rho, axis), ss.residual))
        })
        .map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("mu", triple(mu))?;
    d.set_item("b", core_bimodality(&dist))?;
    d.set_item("probabilities", dist.probabilities.clone())?;
    d.set_item("residual", residual)?;
    Ok(d)
}

/// `b = 2 (P_max2 - P_min) / (P_max1 + P_max2)` of a binned distribution.
#[pyfunction]
fn bimodality_index(probabilities: Vec<f64>) -> PyResult<f64> {
    let dist = MagnetizationDistribution::new(probabilities).map_err(err)?;
    Ok(core_bimodality(&dist))
}

/// Closure trajectory from the all-down state: dict with `times`, `mu`,
/// `steady`, `residual`, `kappa`, `sigma`, `lambda`.
#[pyfunction]
fn mfqf_run<'py>(py: Python<'py>, lattice: &PyLattice, params: &PyModelParams, t_final: f64) -> PyResult<Bound<'py, PyDict>> {
    let (lat, p) = (lattice.inner.clone(), params.inner);
    let run = py
        .detach(|| -> ddspin::Result<_> {
            let start = MfqfState::down(&lat)?;
            Ok(mfqf::mfqf_integrate(&start, &p, t_final, &MfqfOptions::default(), &[])?)
        })
        .map_err(err)?;
    let obs = CorrelationObservables::measure(&run.final_state.field, &run.trace);
    let d = PyDict::new(py);
    d.set_item("times", run.trace.times.clone())?;
    d.set_item("mu", run.trace.mu.iter().map(|m| triple(*m)).collect::<Vec<_>>())?;
    d.set_item("steady", run.steady)?;
    d.set_item("residual", run.residual)?;
    d.set_item("kappa", obs.kappa)?;
    d.set_item("sigma", obs.sigma.to_vec())?;
    d.set_item("lambda", obs.lambda.to_vec())?;
    Ok(d)
}

#[pymodule]
fn ddspin_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModelParams>()?;
    m.add_class::<PyLattice>()?;
    m.add_function(wrap_pyfunction!(mf_fixed_points, m)?)?;
    m.add_function(wrap_pyfunction!(mf_bistability_scan, m)?)?;
    m.add_function(wrap_pyfunction!(run_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(exact_steady_state, m)?)?;
    m.add_function(wrap_pyfunction!(bimodality_index, m)?)?;
    m.add_function(wrap_pyfunction!(mfqf_run, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
