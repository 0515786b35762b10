//! Python bindings. Specs and configs cross the boundary as JSON strings in
//! the same schema the CLI reads; reports come back as plain dicts and lists.

use littlemix::diagnostics::{self, BurnInParams};
use littlemix::estimators::{self, OptimizerOpts};
use littlemix::experiments::{self, SweepConfig};
use littlemix::hypotheses::HypothesisSpec;
use littlemix::processes::{ProcessSpec, TrajectoryBatch};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde::Serialize;
use serde_json::Value;

fn py_err(e: littlemix::Error) -> PyErr {
    if e.is_validation() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn from_json<T: for<'de> serde::Deserialize<'de>>(s: &str) -> PyResult<T> {
    serde_json::from_str(s).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn value_to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        Value::Number(n) => match (n.as_u64(), n.as_i64()) {
            (Some(u), _) => u.into_pyobject(py)?.into_any(),
            (None, Some(i)) => i.into_pyobject(py)?.into_any(),
            _ => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any(),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for x in items {
                list.append(value_to_py(py, x)?)?;
            }
            list.into_any()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, x) in map {
                dict.set_item(k, value_to_py(py, x)?)?;
            }
            dict.into_any()
        }
    })
}

fn to_py<'py, T: Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let v = serde_json::to_value(v).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    value_to_py(py, &v)
}

/// Row-major nested lists.
fn rows(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn vectors(v: &[nalgebra::DVector<f64>]) -> Vec<Vec<f64>> {
    v.iter().map(|x| x.as_slice().to_vec()).collect()
}

/// A covariate process (finite chain, LDS or GLM dynamics).
#[pyclass(name = "Process", frozen, module = "littlemix_py")]
struct PyProcess {
    inner: ProcessSpec,
}

#[pymethods]
impl PyProcess {
    #[new]
    fn new(spec_json: &str) -> PyResult<Self> {
        Ok(PyProcess { inner: from_json(spec_json)? })
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.inner.kind()
    }

    #[getter]
    fn d_x(&self) -> usize {
        self.inner.d_x()
    }

    #[getter]
    fn d_y(&self) -> usize {
        self.inner.d_y()
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    fn simulate(&self, py: Python<'_>, t_len: usize, seed: u64) -> PyResult<PyTrajectory> {
        let inner = py.detach(|| self.inner.simulate(t_len, seed)).map_err(py_err)?;
        Ok(PyTrajectory { inner })
    }

    /// Dense dependency matrix as a list of rows; finite chains only.
    fn dependency_matrix(&self, t_len: usize) -> PyResult<Vec<Vec<f64>>> {
        let g = self.chain_gamma(t_len)?;
        Ok((0..t_len).map(|i| (0..t_len).map(|j| g.get(i, j)).collect()).collect())
    }

    fn dependency_opnorm(&self, py: Python<'_>, t_len: usize) -> PyResult<f64> {
        let g = self.chain_gamma(t_len)?;
        Ok(py.detach(|| diagnostics::dependency_opnorm(&g)))
    }

    fn __repr__(&self) -> String {
        format!("Process(kind={:?}, d_x={})", self.inner.kind(), self.inner.d_x())
    }
}

impl PyProcess {
    fn chain_gamma(&self, t_len: usize) -> PyResult<diagnostics::DependencyMatrix> {
        match &self.inner {
            ProcessSpec::FiniteChain(c) => {
                diagnostics::dependency_matrix_finite(c, t_len, diagnostics::DEFAULT_DEPENDENCY_CAP).map_err(py_err)
            }
            _ => Err(PyValueError::new_err("the exact dependency matrix is only available for finite chains")),
        }
    }
}

/// One simulated trajectory.
#[pyclass(name = "Trajectory", frozen, module = "littlemix_py")]
struct PyTrajectory {
    inner: TrajectoryBatch,
}

#[pymethods]
impl PyTrajectory {
    #[getter]
    fn xs(&self) -> Vec<Vec<f64>> {
        vectors(&self.inner.xs)
    }

    #[getter]
    fn ys(&self) -> Vec<Vec<f64>> {
        vectors(&self.inner.ys)
    }

    #[getter]
    fn states(&self) -> Option<Vec<usize>> {
        self.inner.states.clone()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[getter]
    fn truncated(&self) -> bool {
        self.inner.truncated_flag
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// A hypothesis family searched by the estimators.
#[pyclass(name = "Family", frozen, module = "littlemix_py")]
struct PyFamily {
    inner: HypothesisSpec,
}

#[pymethods]
impl PyFamily {
    #[new]
    fn new(spec_json: &str) -> PyResult<Self> {
        let inner: HypothesisSpec = from_json(spec_json)?;
        inner.validate().map_err(py_err)?;
        Ok(PyFamily { inner })
    }

    /// Fits on `trajectory` and scores the fit against the process's f⋆.
    /// The excess risk is exact where a closed form exists, otherwise Monte
    /// Carlo over `n_eval` fresh trajectories drawn from `eval_seed`.
    #[pyo3(signature = (process, trajectory, optimizer_json=None, n_eval=200, eval_seed=0))]
    fn fit<'py>(
        &self,
        py: Python<'py>,
        process: &PyProcess,
        trajectory: &PyTrajectory,
        optimizer_json: Option<&str>,
        n_eval: usize,
        eval_seed: u64,
    ) -> PyResult<Bound<'py, PyAny>> {
        let opts: OptimizerOpts = optimizer_json.map(from_json).transpose()?.unwrap_or_default();
        let (proc_, batch) = (&process.inner, &trajectory.inner);
        let report = py
            .detach(|| -> littlemix::Result<Value> {
                let fitted = estimators::fit(batch, &self.inner, proc_, &opts)?;
                let truth = self.inner.truth(proc_)?;
                let risk = match estimators::excess_risk_exact(&fitted.parameter, &truth, proc_, batch.len()) {
                    Err(littlemix::Error::Unsupported(_)) => {
                        estimators::excess_risk_mc(&fitted.parameter, &truth, proc_, batch.len(), n_eval, eval_seed)?
                    }
                    other => other?,
                };
                Ok(serde_json::json!({
                    "parameter": fitted.parameter,
                    "parameter_matrix": fitted.parameter.matrix().map(rows),
                    "empirical_risk": fitted.empirical_risk,
                    "optimizer_trace": fitted.optimizer_trace,
                    "excess_risk": risk,
                }))
            })
            .map_err(py_err)?;
        value_to_py(py, &report)
    }

    fn __repr__(&self) -> String {
        format!("Family({})", serde_json::to_string(&self.inner).unwrap_or_default())
    }
}

#[pyfunction]
fn burn_in<'py>(py: Python<'py>, params_json: &str) -> PyResult<Bound<'py, PyAny>> {
    let params: BurnInParams = from_json(params_json)?;
    to_py(py, &diagnostics::burn_in(&params).map_err(py_err)?)
}

#[pyfunction]
#[allow(clippy::too_many_arguments)]
fn main_bound<'py>(
    py: Python<'py>,
    em_t: f64,
    r: f64,
    b: f64,
    log_card: f64,
    c: f64,
    alpha: f64,
    gamma_opnorm: f64,
    t_len: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let rep = diagnostics::main_bound(em_t, r, b, log_card, c, alpha, gamma_opnorm, t_len).map_err(py_err)?;
    to_py(py, &rep)
}

/// Replicate sweep; returns {"rows", "aggregates", "seeds"}.
#[pyfunction]
fn risk_curve<'py>(py: Python<'py>, sweep_json: &str) -> PyResult<Bound<'py, PyAny>> {
    let cfg: SweepConfig = from_json(sweep_json)?;
    let res = py.detach(|| experiments::risk_curve(&cfg)).map_err(py_err)?;
    to_py(py, &res)
}

/// Mixing sweep; the returned dict carries "rows", "invariance" and the
/// detected burn-in horizon per parameter under "burn_in".
#[pyfunction]
#[pyo3(signature = (sweep_json, slope_tol=0.3))]
fn mixing_sweep<'py>(py: Python<'py>, sweep_json: &str, slope_tol: f64) -> PyResult<Bound<'py, PyAny>> {
    let cfg: SweepConfig = from_json(sweep_json)?;
    let rep = py.detach(|| experiments::mixing_sweep(&cfg)).map_err(py_err)?;
    let detected: Vec<(f64, f64)> = experiments::burn_in_detect(&rep.result, slope_tol)
        .into_iter()
        .map(|(p, d)| (p, d.as_horizon()))
        .collect();
    let out = to_py(py, &rep)?;
    out.set_item("burn_in", detected)?;
    Ok(out)
}

#[pymodule]
pub fn littlemix_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyProcess>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_class::<PyFamily>()?;
    m.add_function(wrap_pyfunction!(burn_in, m)?)?;
    m.add_function(wrap_pyfunction!(main_bound, m)?)?;
    m.add_function(wrap_pyfunction!(risk_curve, m)?)?;
    m.add_function(wrap_pyfunction!(mixing_sweep, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
