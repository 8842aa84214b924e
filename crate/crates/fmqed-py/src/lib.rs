//! Python bindings: configs, mode tables, lattice sums, the action and the
//! short-time propagator. Structured results come back as dicts and lists.

use nalgebra::{DVector, Vector3};
use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use serde::Serialize;

use fmqed::action::{
    constraint_identity_check, ActionModel as CoreAction, BrokenPath, Subdivision,
};
use fmqed::cli::{build_backend, BackendArg};
use fmqed::coulomb::{
    anisotropic_counterexample, coulomb_limit_table, riemann_sum, LatticeSummand,
};
use fmqed::field::FieldModel;
use fmqed::fock::{diagonal_spectrum, FockSpace, StateVector};
use fmqed::lattice::{
    build_mode_set, build_polarization, mode_table, BoxDims, ModeRole, WaveVector,
};
use fmqed::propagator::{
    convergence_study, fundamental_step, residual_study, rho_star_search, SampleBox, StepBackend,
};
use fmqed::{Error, SimulationConfig};

fn err(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::Input(_) | Error::Unsupported(_) => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn points(raw: Vec<[f64; 3]>) -> Vec<Vector3<f64>> {
    raw.into_iter().map(Vector3::from).collect()
}

/// Simulation configuration, read from TOML text.
#[pyclass(name = "Config", from_py_object)]
#[derive(Clone)]
struct Config {
    inner: SimulationConfig,
}

#[pymethods]
impl Config {
    #[new]
    #[pyo3(signature = (toml = ""))]
    fn new(toml: &str) -> PyResult<Self> {
        Ok(Config {
            inner: SimulationConfig::from_toml_str(toml).map_err(err)?,
        })
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml_string()
    }

    #[getter]
    fn box_lengths(&self) -> [f64; 3] {
        self.inner.box_lengths
    }

    #[getter]
    fn n_particles(&self) -> usize {
        self.inner.n_particles
    }

    fn __repr__(&self) -> String {
        format!(
            "Config(box_lengths={:?}, n_particles={})",
            self.inner.box_lengths, self.inner.n_particles
        )
    }
}

/// Half-lattice table for "coulomb", "coupling" or "field".
#[pyfunction]
#[pyo3(signature = (config, role = "field"))]
fn modes(py: Python<'_>, config: &Config, role: &str) -> PyResult<Py<PyAny>> {
    let role = match role {
        "coulomb" => ModeRole::Coulomb,
        "coupling" => ModeRole::Coupling,
        "field" => ModeRole::Field,
        other => return Err(PyValueError::new_err(format!("unknown role {other:?}"))),
    };
    let set = build_mode_set(&config.inner, role).map_err(err)?;
    let frame = build_polarization(&set).map_err(err)?;
    to_py(py, &mode_table(&set, &frame))
}

/// Mollified two-charge lattice sums for each (L, eps).
#[pyfunction]
#[pyo3(signature = (steps, separation = 1.0, charges = (1.0, 1.0)))]
fn coulomb_limit(
    py: Python<'_>,
    steps: Vec<(f64, f64)>,
    separation: f64,
    charges: (f64, f64),
) -> PyResult<Py<PyAny>> {
    let rows = coulomb_limit_table(separation, [charges.0, charges.1], &steps).map_err(err)?;
    to_py(py, &rows)
}

/// Riemann sum over the box of side `side` for "lorentzian" or "gaussian-cutoff".
#[pyfunction]
#[pyo3(signature = (side, summand = "lorentzian"))]
fn riemann(py: Python<'_>, side: f64, summand: &str) -> PyResult<Py<PyAny>> {
    let s = match summand {
        "lorentzian" => LatticeSummand::lorentzian_coulomb(),
        "gaussian-cutoff" => LatticeSummand::gaussian_cutoff_coulomb(),
        other => return Err(PyValueError::new_err(format!("unknown summand {other:?}"))),
    };
    to_py(py, &riemann_sum(&s, &BoxDims::cube(side)).map_err(err)?)
}

#[pyfunction]
fn counterexample(py: Python<'_>, scales: Vec<f64>) -> PyResult<Py<PyAny>> {
    to_py(py, &anisotropic_counterexample(&scales).map_err(err)?)
}

/// Both sides of the charge-density identity for the mode s in box `dims`.
#[pyfunction]
fn constraint_identity(
    positions: Vec<[f64; 3]>,
    charges: Vec<f64>,
    s: [i64; 3],
    dims: [f64; 3],
) -> PyResult<(f64, f64)> {
    let k = WaveVector::new(s, &BoxDims(dims));
    let r = constraint_identity_check(&points(positions), &charges, &k).map_err(err)?;
    Ok((r.lhs, r.rhs))
}

/// (energy, multiplicity) pairs of the free field on the truncated Fock space.
#[pyfunction]
fn fock_spectrum(config: &Config) -> PyResult<Vec<(f64, usize)>> {
    let model = FieldModel::from_config(&config.inner).map_err(err)?;
    let fock = FockSpace::new(&model, config.inner.occupation_cap).map_err(err)?;
    Ok(diagonal_spectrum(&fock.h_rad())
        .into_iter()
        .map(|l| (l.energy, l.multiplicity))
        .collect())
}

/// Action functional for a configuration.
#[pyclass]
struct ActionModel {
    inner: CoreAction,
}

#[pymethods]
impl ActionModel {
    #[new]
    fn new(config: &Config) -> PyResult<Self> {
        Ok(ActionModel {
            inner: CoreAction::from_config(&config.inner).map_err(err)?,
        })
    }

    #[getter]
    fn n_field_vars(&self) -> usize {
        self.inner.field.layout.len()
    }

    /// Straight-segment action from (s, y, ya) to (t, x, xa).
    fn segment(
        &self,
        t: f64,
        s: f64,
        x: Vec<[f64; 3]>,
        y: Vec<[f64; 3]>,
        xa: Vec<f64>,
        ya: Vec<f64>,
    ) -> PyResult<f64> {
        self.inner
            .segment_action(t, s, &points(x), &points(y), &xa, &ya)
            .map_err(err)
    }

    /// Action of the broken line through the given vertices.
    fn broken(
        &self,
        times: Vec<f64>,
        particles: Vec<Vec<[f64; 3]>>,
        fields: Vec<Vec<f64>>,
    ) -> PyResult<f64> {
        let sub = Subdivision::new(times).map_err(err)?;
        let path = BrokenPath::new(sub, particles.into_iter().map(points).collect(), fields)
            .map_err(err)?;
        self.inner.broken_action(&path).map_err(err)
    }

    /// Sampled Jacobian certificate for the largest admissible step.
    #[pyo3(signature = (samples = 16, seed = 0, ceiling = 4.0, iterations = 20))]
    fn rho_star(
        &self,
        py: Python<'_>,
        samples: usize,
        seed: u64,
        ceiling: f64,
        iterations: usize,
    ) -> PyResult<Py<PyAny>> {
        let bx = SampleBox::for_model(&self.inner);
        to_py(
            py,
            &rho_star_search(&self.inner, bx, samples, seed, ceiling, iterations).map_err(err)?,
        )
    }
}

/// One-step operator on a truncated basis, with its default test state.
#[pyclass]
struct Propagator {
    backend: Box<dyn StepBackend>,
    state: StateVector,
}

#[pymethods]
impl Propagator {
    /// `backend` is "auto", "analytic" or "galerkin".
    #[new]
    #[pyo3(signature = (config, backend = "auto"))]
    fn new(config: &Config, backend: &str) -> PyResult<Self> {
        let choice = match backend {
            "auto" => BackendArg::Auto,
            "analytic" => BackendArg::Analytic,
            "galerkin" => BackendArg::Galerkin,
            other => return Err(PyValueError::new_err(format!("unknown backend {other:?}"))),
        };
        let (backend, state) = build_backend(&config.inner, choice).map_err(err)?;
        Ok(Propagator { backend, state })
    }

    #[getter]
    fn name(&self) -> &'static str {
        self.backend.name()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.backend.dim()
    }

    #[getter]
    fn state(&self) -> Vec<Complex64> {
        self.state.0.iter().copied().collect()
    }

    /// Apply C(t, t − rho) to `state` (defaults to the test state).
    #[pyo3(signature = (rho, state = None))]
    fn step(&self, rho: f64, state: Option<Vec<Complex64>>) -> PyResult<Vec<Complex64>> {
        let f = match state {
            Some(v) if v.len() != self.backend.dim() => {
                return Err(PyValueError::new_err(format!(
                    "state has {} entries, basis has {}",
                    v.len(),
                    self.backend.dim()
                )))
            }
            Some(v) => StateVector(DVector::from_vec(v)),
            None => self.state.clone(),
        };
        let out = fundamental_step(self.backend.as_ref(), &f, rho, 0.0).map_err(err)?;
        Ok(out.0.iter().copied().collect())
    }

    /// Composed steps against exact evolution for each step count.
    fn convergence(&self, py: Python<'_>, t_final: f64, steps: Vec<usize>) -> PyResult<Py<PyAny>> {
        let rows = py
            .detach(|| convergence_study(self.backend.as_ref(), &self.state, t_final, &steps))
            .map_err(err)?;
        to_py(py, &rows)
    }

    fn residual(&self, py: Python<'_>, rhos: Vec<f64>) -> PyResult<Py<PyAny>> {
        let table = py
            .detach(|| residual_study(self.backend.as_ref(), &self.state, &rhos))
            .map_err(err)?;
        to_py(py, &table)
    }
}

#[pymodule]
fn fmqed_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Config>()?;
    m.add_class::<ActionModel>()?;
    m.add_class::<Propagator>()?;
    m.add_function(wrap_pyfunction!(modes, m)?)?;
    m.add_function(wrap_pyfunction!(coulomb_limit, m)?)?;
    m.add_function(wrap_pyfunction!(riemann, m)?)?;
    m.add_function(wrap_pyfunction!(counterexample, m)?)?;
    m.add_function(wrap_pyfunction!(constraint_identity, m)?)?;
    m.add_function(wrap_pyfunction!(fock_spectrum, m)?)?;
    Ok(())
}
