//! Python bindings. Configs, summaries and metrics cross the boundary as
//! JSON-compatible dicts; points and tensors as nested lists.

use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use elastipinn::driver::{self, Assembled, ExperimentConfig};
use elastipinn::losses::{predict_point, PointPrediction, Term};
use elastipinn::mechanics::{self, MaterialModel};
use elastipinn::network::FourierSpec;
use elastipinn::tensor::Mat3;

create_exception!(elastipinn_py, ElastipinnError, PyException);

fn err(e: impl std::fmt::Display) -> PyErr {
    ElastipinnError::new_err(e.to_string())
}

fn to_py<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn from_py<T: serde::de::DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = if let Ok(s) = obj.extract::<String>() {
        s
    } else {
        obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?
    };
    serde_json::from_str(&text).map_err(err)
}

fn config_from(obj: &Bound<'_, PyAny>) -> PyResult<ExperimentConfig> {
    let cfg: ExperimentConfig = from_py(obj)?;
    cfg.validate().map_err(err)?;
    Ok(cfg)
}

/// `[(name, summary), ...]` for every built-in experiment.
#[pyfunction]
fn presets() -> Vec<(String, String)> {
    driver::presets()
        .iter()
        .map(|p| (p.name.to_string(), p.summary.to_string()))
        .collect()
}

#[pyfunction]
fn preset<'py>(py: Python<'py>, name: &str) -> PyResult<Bound<'py, PyAny>> {
    let cfg = driver::preset(name).ok_or_else(|| err(format!("unknown preset '{name}'")))?;
    to_py(py, &cfg)
}

/// Applies `key=value` overrides, validates, and returns the resolved config.
#[pyfunction]
#[pyo3(signature = (config, overrides = Vec::new()))]
fn resolve_config<'py>(
    py: Python<'py>,
    config: &Bound<'py, PyAny>,
    overrides: Vec<String>,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = config_from(config)?;
    let text = cfg.to_json().map_err(err)?;
    let cfg = driver::config_with_overrides(&text, &overrides).map_err(err)?;
    to_py(py, &cfg)
}

/// Trains one replicate and writes its run directory; returns the summary.
#[pyfunction]
fn run_replicate<'py>(py: Python<'py>, config: &Bound<'py, PyAny>, ld: f64, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let cfg = config_from(config)?;
    let summary = py.detach(|| driver::run_replicate(&cfg, ld, seed)).map_err(err)?;
    to_py(py, &summary)
}

/// A fully assembled problem: model, point sets, truth and initial θ.
#[pyclass(name = "Problem", module = "elastipinn_py")]
struct PyProblem {
    inner: Assembled,
}

#[pymethods]
impl PyProblem {
    #[new]
    #[pyo3(signature = (config, ld = 0.0, seed = 1))]
    fn new(config: &Bound<'_, PyAny>, ld: f64, seed: u64) -> PyResult<Self> {
        let cfg = config_from(config)?;
        let inner = driver::assemble(&cfg, ld, seed).map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn n_params(&self) -> usize {
        self.inner.theta0.len()
    }

    #[getter]
    fn theta0(&self) -> Vec<f64> {
        self.inner.theta0.clone()
    }

    #[getter]
    fn scalar_names(&self) -> Vec<String> {
        self.inner.scalar_names.clone()
    }

    /// Loss terms that have data in the training set.
    fn terms(&self) -> Vec<&'static str> {
        self.inner.model.applicable(&self.inner.train).into_iter().map(Term::name).collect()
    }

    #[getter]
    fn n_observations(&self) -> usize {
        self.inner.train.obs.len()
    }

    /// Returns `(objective, {term: (raw, weighted)}, gradient or None)`.
    #[pyo3(signature = (theta, grad = true, test = false))]
    fn evaluate(
        &self,
        py: Python<'_>,
        theta: Vec<f64>,
        grad: bool,
        test: bool,
    ) -> PyResult<(f64, Py<PyDict>, Option<Vec<f64>>)> {
        let sets = if test { &self.inner.test } else { &self.inner.train };
        let terms = self.inner.model.applicable(sets);
        let ev = py
            .detach(|| self.inner.model.evaluate(&theta, sets, &terms, grad))
            .map_err(err)?;
        let parts = PyDict::new(py);
        for t in &ev.breakdown.terms {
            parts.set_item(t.term.name(), (t.raw, t.weighted))?;
        }
        Ok((ev.objective, parts.unbind(), grad.then_some(ev.grad)))
    }

    /// Predicted `(u, strain, cauchy_stress, stiffness)` at each point.
    fn predict(
        &self,
        theta: Vec<f64>,
        points: Vec<[f64; 3]>,
    ) -> PyResult<Vec<PointPrediction>> {
        points
            .iter()
            .map(|x| predict_point(&self.inner.model, &theta, x).map_err(err))
            .collect()
    }

    /// `E_u`, `E_strain`, `E_stress` and `E_mu` on the test set.
    fn metrics<'py>(&self, py: Python<'py>, theta: Vec<f64>) -> PyResult<Bound<'py, PyAny>> {
        let m = elastipinn::losses::error_metrics(
            &self.inner.model,
            &theta,
            &self.inner.truth,
            self.inner.stiffness_truth.as_ref(),
        )
        .map_err(err)?;
        to_py(py, &m)
    }
}

fn material_from(obj: &Bound<'_, PyAny>) -> PyResult<MaterialModel> {
    let m: MaterialModel = from_py(obj)?;
    m.validate().map_err(err)?;
    Ok(m)
}

fn state(f: &Mat3<f64>, x: [f64; 3]) -> PyResult<mechanics::DeformationState> {
    let mut grad_u = *f;
    for (i, row) in grad_u.iter_mut().enumerate() {
        row[i] -= 1.0;
    }
    mechanics::kinematics(&grad_u, x).map_err(err)
}

/// First Piola-Kirchhoff stress of `material` at deformation gradient `f`.
#[pyfunction]
#[pyo3(signature = (material, f, x = [0.0, 0.0, 0.0]))]
fn piola(material: &Bound<'_, PyAny>, f: Mat3<f64>, x: [f64; 3]) -> PyResult<Mat3<f64>> {
    let m = material_from(material)?;
    mechanics::first_pk_stress(&m, &state(&f, x)?, x).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (material, f, x = [0.0, 0.0, 0.0]))]
fn cauchy(material: &Bound<'_, PyAny>, f: Mat3<f64>, x: [f64; 3]) -> PyResult<Mat3<f64>> {
    let m = material_from(material)?;
    let s = state(&f, x)?;
    let p = mechanics::first_pk_stress(&m, &s, x).map_err(err)?;
    Ok(mechanics::cauchy_stress(&p, &s))
}

#[pyfunction]
#[pyo3(signature = (material, f, x = [0.0, 0.0, 0.0]))]
fn strain_energy(material: &Bound<'_, PyAny>, f: Mat3<f64>, x: [f64; 3]) -> PyResult<f64> {
    let m = material_from(material)?;
    mechanics::strain_energy(&m, &state(&f, x)?, x).map_err(err)
}

#[pyfunction]
fn green_lagrange(f: Mat3<f64>) -> Mat3<f64> {
    mechanics::green_lagrange(&f)
}

/// Random Fourier feature map with a frozen B matrix.
#[pyclass(name = "FourierFeatures", module = "elastipinn_py")]
struct PyFourier {
    inner: FourierSpec,
}

#[pymethods]
impl PyFourier {
    #[new]
    #[pyo3(signature = (m, sigma, seed = 0))]
    fn new(m: usize, sigma: f64, seed: u64) -> PyResult<Self> {
        Ok(Self {
            inner: FourierSpec::draw(m, sigma, seed).map_err(err)?,
        })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn b(&self) -> Vec<[f64; 3]> {
        self.inner.b.clone()
    }

    fn embed(&self, x: [f64; 3]) -> Vec<f64> {
        self.inner.embed(&x)
    }
}

#[pymodule]
fn elastipinn_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("ElastipinnError", m.py().get_type::<ElastipinnError>())?;
    m.add("FIELD_HEADER", driver::FIELD_HEADER)?;
    m.add_class::<PyProblem>()?;
    m.add_class::<PyFourier>()?;
    m.add_function(wrap_pyfunction!(presets, m)?)?;
    m.add_function(wrap_pyfunction!(preset, m)?)?;
    m.add_function(wrap_pyfunction!(resolve_config, m)?)?;
    m.add_function(wrap_pyfunction!(run_replicate, m)?)?;
    m.add_function(wrap_pyfunction!(piola, m)?)?;
    m.add_function(wrap_pyfunction!(cauchy, m)?)?;
    m.add_function(wrap_pyfunction!(strain_energy, m)?)?;
    m.add_function(wrap_pyfunction!(green_lagrange, m)?)?;
    Ok(())
}
