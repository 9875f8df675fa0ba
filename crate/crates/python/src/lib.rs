// SPDX-License-Identifier: Apache-2.0

//! Python bindings: configure and run the pipeline, read its CSR output,
//! and query the in-memory oracle and validators.

use std::path::PathBuf;

use emrmat::csr::CsrGraph;
use emrmat::pipeline::{run_phases, Phase};
use emrmat::{validate, ClusterConfig, Error};
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Config(_) => PyValueError::new_err(e.to_string()),
        Error::Io { .. } | Error::Incomplete(_) => PyIOError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// Run configuration. Keyword arguments use the CLI flag names with
/// underscores, e.g. `Config(scale=10, edge_factor=8, csr_variant="hash")`.
#[pyclass(name = "Config", module = "emrmat", from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: ClusterConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    #[pyo3(signature = (**kwargs))]
    fn new(kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let mut inner = ClusterConfig::default();
        if let Some(kw) = kwargs {
            for (k, v) in kw.iter() {
                let key = k.extract::<String>()?.replace('_', "-");
                inner.set(&key, &v.str()?.to_string()).map_err(to_py)?;
            }
        }
        Ok(PyConfig { inner })
    }

    fn get(&self, key: &str) -> Option<String> {
        self.inner.get(&key.replace('_', "-"))
    }

    fn set(&mut self, key: &str, value: &Bound<'_, PyAny>) -> PyResult<()> {
        self.inner
            .set(&key.replace('_', "-"), &value.str()?.to_string())
            .map_err(to_py)
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(to_py)
    }

    #[getter]
    fn n(&self) -> u64 {
        self.inner.n()
    }

    #[getter]
    fn bucket(&self) -> u64 {
        self.inner.bucket()
    }

    #[getter]
    fn total_edges(&self) -> u64 {
        self.inner.total_edges()
    }

    #[getter]
    fn workdir(&self) -> String {
        self.inner.workdir.display().to_string()
    }

    fn __repr__(&self) -> String {
        let body = self.inner.to_kv_string().trim_end().replace('\n', ", ");
        format!("Config({body})")
    }
}

/// One node's CSR file.
#[pyclass(name = "Csr", module = "emrmat", frozen)]
struct PyCsr {
    inner: CsrGraph,
}

#[pymethods]
impl PyCsr {
    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        CsrGraph::read(&path).map(|inner| PyCsr { inner }).map_err(to_py)
    }

    #[getter]
    fn n(&self) -> u64 {
        self.inner.n
    }

    #[getter]
    fn base(&self) -> u64 {
        self.inner.base
    }

    #[getter]
    fn offv(&self) -> Vec<u64> {
        self.inner.offv.clone()
    }

    #[getter]
    fn adjv(&self) -> Vec<u64> {
        self.inner.adjv.clone()
    }

    /// Neighbors of global vertex `v`, which must be owned by this file.
    fn neighbors(&self, v: u64) -> PyResult<Vec<u64>> {
        let local = v
            .checked_sub(self.inner.base)
            .filter(|l| *l < self.inner.bucket())
            .ok_or_else(|| PyValueError::new_err(format!("vertex {v} is not owned by this CSR")))?;
        Ok(self.inner.neighbors(local as usize).to_vec())
    }

    fn degrees(&self) -> Vec<u64> {
        self.inner.degrees()
    }

    fn edges(&self) -> Vec<(u64, u64)> {
        self.inner.edges().into_iter().map(|e| (e.src, e.des)).collect()
    }

    fn __len__(&self) -> usize {
        self.inner.adjv.len()
    }
}

/// Runs the pipeline, or the named phases, and returns the manifest as a dict.
#[pyfunction]
#[pyo3(signature = (config, phases = None))]
fn run_pipeline<'py>(py: Python<'py>, config: &PyConfig, phases: Option<Vec<String>>) -> PyResult<Bound<'py, PyDict>> {
    let phases = match phases {
        None => Phase::ALL.to_vec(),
        Some(names) => names
            .iter()
            .map(|s| s.parse::<Phase>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(to_py)?,
    };
    let cfg = config.inner.clone();
    let report = py.detach(move || run_phases(&cfg, &phases)).map_err(to_py)?;
    let out = PyDict::new(py);
    for (k, v) in report.manifest.entries() {
        out.set_item(k, v)?;
    }
    Ok(out)
}

/// `(name, ok, detail)` for one validation check.
type CheckRow = (String, bool, String);

/// Checks a completed run directory; returns `(ok, [(name, ok, detail)])`.
#[pyfunction]
fn validate_run(py: Python<'_>, workdir: PathBuf) -> PyResult<(bool, Vec<CheckRow>)> {
    let report = py.detach(move || validate::validate_run(&workdir)).map_err(to_py)?;
    let ok = report.is_ok();
    Ok((ok, report.checks.into_iter().map(|c| (c.name, c.ok, c.detail)).collect()))
}

/// Sequential reference graph: `{"pv", "edges", "offv", "adjv"}` with
/// relabeled edges in stream order.
#[pyfunction]
fn oracle_generate<'py>(py: Python<'py>, config: &PyConfig) -> PyResult<Bound<'py, PyDict>> {
    let cfg = config.inner.clone();
    let o = py.detach(move || validate::oracle_generate(&cfg)).map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("pv", o.pv)?;
    out.set_item("edges", o.relabeled.iter().map(|e| (e.src, e.des)).collect::<Vec<_>>())?;
    out.set_item("offv", o.csr.offv)?;
    out.set_item("adjv", o.csr.adjv)?;
    Ok(out)
}

#[pyfunction]
fn is_permutation(pv: Vec<u64>) -> bool {
    validate::verify_permutation(&pv, pv.len() as u64).is_bijective()
}

/// `{"min", "max", "mean", "median", "max_mean_ratio", "histogram"}`.
#[pyfunction]
fn degree_stats<'py>(py: Python<'py>, degrees: Vec<u64>) -> PyResult<Bound<'py, PyDict>> {
    let s = validate::degree_stats(&degrees);
    let out = PyDict::new(py);
    out.set_item("min", s.min)?;
    out.set_item("max", s.max)?;
    out.set_item("mean", s.mean)?;
    out.set_item("median", s.median)?;
    out.set_item("max_mean_ratio", s.max_mean_ratio)?;
    out.set_item("histogram", s.histogram)?;
    Ok(out)
}

#[pymodule(name = "emrmat")]
fn emrmat_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", emrmat::VERSION)?;
    m.add_class::<PyConfig>()?;
    m.add_class::<PyCsr>()?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    m.add_function(wrap_pyfunction!(validate_run, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_generate, m)?)?;
    m.add_function(wrap_pyfunction!(is_permutation, m)?)?;
    m.add_function(wrap_pyfunction!(degree_stats, m)?)?;
    Ok(())
}
