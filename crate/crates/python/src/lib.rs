//! Python bindings for the holoscat core crate.

use holoscat::error::Error;
use holoscat::evidence::log_mean_exp;
use holoscat::experiment::pipeline::output_dir;
use holoscat::experiment::{ExperimentConfig, Runner, Stage};
use holoscat::forward::Scene;
use holoscat::geometry::{shape_stats, ComponentParams, ShapeParams, ADMISSIBILITY_GRID};
use holoscat::measure::{add_noise as add_noise_core, DataVector, MeasurementOperator};
use holoscat::mie::mie_circle_reference;
use holoscat::model::ForwardModel;
use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use std::path::PathBuf;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::InvalidInput(_) | Error::LengthMismatch { .. } => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn operator(name: &str) -> PyResult<MeasurementOperator> {
    match name {
        "field" => Ok(MeasurementOperator::Field),
        "intensity" => Ok(MeasurementOperator::Intensity),
        other => Err(PyValueError::new_err(format!("unknown operator {other:?}, expected 'field' or 'intensity'"))),
    }
}

/// One star-shaped component: center plus Fourier radius coefficients.
#[pyclass(name = "Component", from_py_object)]
#[derive(Clone)]
struct PyComponent {
    inner: ComponentParams,
}

#[pymethods]
impl PyComponent {
    #[new]
    fn new(center: [f64; 2], a: Vec<f64>, b: Vec<f64>) -> PyResult<Self> {
        if a.is_empty() || b.len() + 1 != a.len() {
            return Err(PyValueError::new_err("need a_0..a_M and b_1..b_M"));
        }
        Ok(Self { inner: ComponentParams { center, a, b } })
    }

    #[staticmethod]
    #[pyo3(signature = (center, radius, modes = 5))]
    fn circle(center: [f64; 2], radius: f64, modes: usize) -> Self {
        Self { inner: ComponentParams::circle(center, radius, modes) }
    }

    #[getter]
    fn center(&self) -> [f64; 2] {
        self.inner.center
    }

    #[getter]
    fn a(&self) -> Vec<f64> {
        self.inner.a.clone()
    }

    #[getter]
    fn b(&self) -> Vec<f64> {
        self.inner.b.clone()
    }

    fn radius(&self, t: f64) -> f64 {
        self.inner.radius(t)
    }

    fn is_admissible(&self) -> bool {
        self.inner.is_admissible(ADMISSIBILITY_GRID)
    }

    /// Area, center of mass, radii and directions as a dict.
    fn stats<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let s = shape_stats(&self.inner, 512).map_err(to_py)?;
        let d = PyDict::new(py);
        d.set_item("area", s.area)?;
        d.set_item("center_of_mass", s.center_of_mass)?;
        d.set_item("deviation", s.deviation)?;
        d.set_item("r_min", s.r_min)?;
        d.set_item("r_max", s.r_max)?;
        d.set_item("dir_min", s.dir_min)?;
        d.set_item("dir_max", s.dir_max)?;
        Ok(d)
    }

    fn __repr__(&self) -> String {
        format!("Component(center={:?}, a={:?}, b={:?})", self.inner.center, self.inner.a, self.inner.b)
    }
}

/// Single plane-wave incidence, detectors on a line, transmission solver.
#[pyclass(name = "ForwardModel")]
struct PyForwardModel {
    inner: ForwardModel,
}

#[pymethods]
impl PyForwardModel {
    #[new]
    #[pyo3(signature = (kappa_e, kappa_i, detectors, beta = 1.0, incident = [0.0, 1.0], operator = "field", nodes = 64))]
    fn new(kappa_e: f64, kappa_i: f64, detectors: Vec<[f64; 2]>, beta: f64, incident: [f64; 2], operator: &str, nodes: usize) -> PyResult<Self> {
        let scene = Scene { kappa_e, kappa_i, beta, incident, detectors };
        scene.validate().map_err(to_py)?;
        Ok(Self { inner: ForwardModel::new(scene, self::operator(operator)?).with_nodes(nodes) })
    }

    /// Total field at the detectors.
    fn field(&self, py: Python<'_>, components: Vec<PyComponent>) -> PyResult<Vec<Complex64>> {
        let nu = ShapeParams::new(components.into_iter().map(|c| c.inner).collect());
        py.detach(|| self.inner.field(&nu)).map_err(to_py)
    }

    /// Measured data `f(u)` at the detectors.
    fn predict(&self, py: Python<'_>, components: Vec<PyComponent>) -> PyResult<Vec<Complex64>> {
        let nu = ShapeParams::new(components.into_iter().map(|c| c.inner).collect());
        py.detach(|| self.inner.predict(&nu)).map_err(to_py)
    }
}

/// Analytic total field for a penetrable circle.
#[pyfunction]
#[pyo3(signature = (radius, center, kappa_e, kappa_i, detectors, beta = 1.0, incident = [0.0, 1.0]))]
fn mie_field(radius: f64, center: [f64; 2], kappa_e: f64, kappa_i: f64, detectors: Vec<[f64; 2]>, beta: f64, incident: [f64; 2]) -> PyResult<Vec<Complex64>> {
    let scene = Scene { kappa_e, kappa_i, beta, incident, detectors: detectors.clone() };
    mie_circle_reference(radius, center, &scene, &detectors).map_err(to_py)
}

/// Noisy copy of `values` and the noise standard deviation.
#[pyfunction]
#[pyo3(signature = (values, level, seed, operator = "field"))]
fn add_noise(values: Vec<Complex64>, level: f64, seed: u64, operator: &str) -> PyResult<(Vec<Complex64>, f64)> {
    let d = DataVector { values, operator: self::operator(operator)?, sigma_noise: 0.0 };
    let out = add_noise_core(&d, level, seed);
    Ok((out.values, out.sigma_noise))
}

/// Gelman-Rubin potential scale reduction per parameter, chains indexed `[chain][step][param]`.
#[pyfunction]
fn gelman_rubin(chains: Vec<Vec<Vec<f64>>>) -> PyResult<Vec<f64>> {
    Ok(holoscat::mcmc::gelman_rubin(&chains).map_err(to_py)?.rhat)
}

/// `(log mean exp(logs), relative standard error)`.
#[pyfunction]
fn log_evidence(logs: Vec<f64>) -> (f64, f64) {
    log_mean_exp(&logs)
}

/// Experiment configuration.
#[pyclass(name = "Config")]
struct PyConfig {
    inner: ExperimentConfig,
}

#[pymethods]
impl PyConfig {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: ExperimentConfig::load(&path).map_err(to_py)? })
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Ok(Self { inner: ExperimentConfig::from_toml(text).map_err(to_py)? })
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml()
    }

    fn hash(&self) -> String {
        self.inner.hash()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.run.seed
    }

    #[setter]
    fn set_seed(&mut self, seed: u64) {
        self.inner.run.seed = seed;
    }

    /// Run the pipeline into `out` (default: the configured directory).
    /// `stages` selects stages by name; otherwise every enabled stage runs
    /// except those in `skip`. Returns True when the MAP search converged.
    #[pyo3(signature = (out = None, stages = None, skip = Vec::new()))]
    fn run(&self, py: Python<'_>, out: Option<PathBuf>, stages: Option<Vec<String>>, skip: Vec<String>) -> PyResult<bool> {
        let dir = output_dir(&self.inner, out.as_deref());
        let parse = |v: &[String]| v.iter().map(|s| Stage::parse(s)).collect::<Result<Vec<_>, _>>().map_err(to_py);
        let skip = parse(&skip)?;
        let only = stages.as_deref().map(parse).transpose()?;
        let cfg = self.inner.clone();
        py.detach(move || {
            let mut runner = Runner::new(cfg, dir)?;
            let mut converged = true;
            match only {
                Some(list) => {
                    for s in list {
                        converged &= !runner.run(s)?.map_not_converged;
                    }
                }
                None => converged = !runner.run_all(&skip)?.map_not_converged,
            }
            Ok(converged)
        })
        .map_err(to_py)
    }
}

#[pymodule(name = "holoscat")]
fn holoscat_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyComponent>()?;
    m.add_class::<PyForwardModel>()?;
    m.add_class::<PyConfig>()?;
    m.add_function(wrap_pyfunction!(mie_field, m)?)?;
    m.add_function(wrap_pyfunction!(add_noise, m)?)?;
    m.add_function(wrap_pyfunction!(gelman_rubin, m)?)?;
    m.add_function(wrap_pyfunction!(log_evidence, m)?)?;
    Ok(())
}
