//! Python bindings: expressions, soliton specs, the identity suite, the
//! triviality classifier, the catalog and the spectral estimator.
//!
//! Reports cross the boundary as JSON and come back as plain dicts, so the
//! key names match the CLI's `--json` output.

use std::sync::Arc;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use serde::Serialize;

use soliton_core::catalog;
use soliton_core::cli::{parse_spec_text, SpecFile};
use soliton_core::exprlang::{self, Expr as CoreExpr};
use soliton_core::soliton::{self, Analysis, SolitonSpec};
use soliton_core::spectral::{self, ManifoldTag, SolverOptions};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(value_err)?;
    py.import("json")?.call_method1("loads", (text,))
}

/// A parsed scalar expression in the coordinates x1..xn.
#[pyclass(name = "Expr", frozen)]
struct PyExpr {
    inner: Arc<CoreExpr>,
    dim: usize,
}

#[pymethods]
impl PyExpr {
    #[new]
    fn new(text: &str, dim: usize) -> PyResult<Self> {
        let inner = exprlang::parse_expr(text, dim).map_err(|e| value_err(e.render(text)))?;
        Ok(Self { inner, dim })
    }

    /// Value at `point`.
    fn evaluate(&self, point: Vec<f64>) -> PyResult<f64> {
        exprlang::evaluate(&self.inner, &point).map_err(value_err)
    }

    /// Exact partial derivative in coordinate `i` (0-based).
    fn diff(&self, i: usize) -> PyResult<Self> {
        if i >= self.dim {
            return Err(value_err(format!("coordinate {i} out of range for dimension {}", self.dim)));
        }
        Ok(Self { inner: exprlang::differentiate(&self.inner, i), dim: self.dim })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.dim
    }

    fn __str__(&self) -> String {
        self.inner.to_string()
    }

    fn __repr__(&self) -> String {
        format!("Expr('{}', {})", self.inner, self.dim)
    }
}

/// A soliton candidate: metric, potential and λ on one chart.
#[pyclass(name = "Soliton", frozen)]
struct PySoliton {
    spec: SolitonSpec,
}

impl PySoliton {
    fn analysis(&self) -> PyResult<Analysis> {
        Analysis::new(&self.spec).map_err(value_err)
    }
}

#[pymethods]
impl PySoliton {
    /// Loads a spec-file document (TOML, or JSON starting with `{`).
    #[staticmethod]
    fn from_spec(text: &str) -> PyResult<Self> {
        Ok(Self { spec: parse_spec_text(text).map_err(value_err)? })
    }

    #[staticmethod]
    fn from_catalog(name: &str) -> PyResult<Self> {
        Ok(Self { spec: catalog::fixture(name).map_err(value_err)?.spec })
    }

    #[getter]
    fn dimension(&self) -> usize {
        self.spec.dim()
    }

    #[getter]
    fn lambda_(&self) -> f64 {
        self.spec.lambda
    }

    #[getter]
    fn kind(&self) -> String {
        self.spec.kind().to_string()
    }

    fn sample_points(&self) -> Vec<Vec<f64>> {
        self.spec.sample_points()
    }

    /// `Ric + Hess f − λg` at `point` as nested lists.
    fn residual(&self, point: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        let m = soliton::soliton_residual(&self.spec, &point).map_err(value_err)?;
        Ok((0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect())
    }

    /// `S + Δf − nλ` at `point`.
    fn trace_residual(&self, point: Vec<f64>) -> PyResult<f64> {
        soliton::trace_identity_residual(&self.spec, &point).map_err(value_err)
    }

    /// Full identity report as a dict (same keys as `soliton verify --json`).
    fn verify<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let report = self.analysis()?.full_report();
        to_py(py, &report)
    }

    /// Returns `(c, spread, shift)` of Hamilton's identity.
    fn hamilton_constant(&self) -> PyResult<(f64, f64, f64)> {
        let h = self.analysis()?.hamilton_constant().map_err(value_err)?;
        Ok((h.c, h.spread, h.shift))
    }

    #[pyo3(signature = (tolerance = 1e-6))]
    fn classify<'py>(&self, py: Python<'py>, tolerance: f64) -> PyResult<Bound<'py, PyAny>> {
        let v = self.analysis()?.classify_triviality(tolerance).map_err(value_err)?;
        to_py(py, &v)
    }

    #[pyo3(signature = (tolerance = 1e-6))]
    fn theorem1<'py>(&self, py: Python<'py>, tolerance: f64) -> PyResult<Bound<'py, PyAny>> {
        let r = self.analysis()?.theorem1_pipeline(tolerance).map_err(value_err)?;
        to_py(py, &r)
    }

    #[pyo3(signature = (tolerance = 1e-6))]
    fn poisson_check<'py>(&self, py: Python<'py>, tolerance: f64) -> PyResult<Bound<'py, PyAny>> {
        let r = self.analysis()?.poisson_check(tolerance).map_err(value_err)?;
        to_py(py, &r)
    }
}

/// Names of the built-in fixtures.
#[pyfunction]
fn catalog_names() -> Vec<&'static str> {
    catalog::FIXTURE_NAMES.to_vec()
}

/// A built-in fixture rendered as a TOML spec file.
#[pyfunction]
fn catalog_spec(name: &str) -> PyResult<String> {
    let f = catalog::fixture(name).map_err(value_err)?;
    toml::to_string(&SpecFile::from_fixture(&f)).map_err(value_err)
}

/// First nonzero Laplace eigenvalue of `torus` (side `size`) or `sphere`
/// (radius `size`).
#[pyfunction]
#[pyo3(signature = (tag, size, resolution = spectral::DEFAULT_RESOLUTION, seed = 0))]
fn first_eigenvalue<'py>(
    py: Python<'py>,
    tag: &str,
    size: f64,
    resolution: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let tag = ManifoldTag::parse(tag, size).map_err(value_err)?;
    let op = spectral::build_laplacian(tag, resolution).map_err(value_err)?;
    let est = py
        .detach(|| spectral::first_eigenvalue(&op, SolverOptions { seed, ..Default::default() }))
        .map_err(value_err)?;
    to_py(py, &est)
}

/// Adds the classes and functions to `m`; shared by the extension entry
/// point and embedded-interpreter tests.
pub fn register(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyExpr>()?;
    m.add_class::<PySoliton>()?;
    m.add_function(wrap_pyfunction!(catalog_names, m)?)?;
    m.add_function(wrap_pyfunction!(catalog_spec, m)?)?;
    m.add_function(wrap_pyfunction!(first_eigenvalue, m)?)?;
    Ok(())
}

#[pymodule]
fn pysoliton(m: &Bound<'_, PyModule>) -> PyResult<()> {
    register(m)
}
