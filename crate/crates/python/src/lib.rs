//! Python bindings. Problems are described with the same JSON documents the
//! command-line tool reads.

use hopf_hj::batch::{evaluate_grid, reference_problem, GridRequest, ReferenceCost};
use hopf_hj::core1d::{self, PotentialParams1D};
use hopf_hj::hopf_solver::{self, optimal_trajectory, uniform_times, AdmmConfig, ProblemDescriptor, ProblemSpec};
use hopf_hj::prox1d::{prox_neg_value, NewtonConfig, ProxQuery};
use hopf_hj::HjError;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: HjError) -> PyErr {
    match e {
        HjError::NewtonNotConverged { .. } | HjError::DescentNotConverged(_) | HjError::Internal(_) => {
            PyRuntimeError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn params(a: f64, b: f64) -> PyResult<PotentialParams1D> {
    PotentialParams1D::new(a, b).map_err(to_py)
}

/// One-dimensional value `V(x, t; p, a, b)`.
#[pyfunction]
fn value(x: f64, t: f64, p: f64, a: f64, b: f64) -> PyResult<f64> {
    core1d::value(x, t, p, &params(a, b)?).map_err(to_py)
}

#[pyfunction]
fn value_dp(x: f64, t: f64, p: f64, a: f64, b: f64) -> PyResult<f64> {
    core1d::value_dp(x, t, p, &params(a, b)?).map_err(to_py)
}

#[pyfunction]
fn value_dx(x: f64, t: f64, p: f64, a: f64, b: f64) -> PyResult<f64> {
    core1d::value_dx(x, t, p, &params(a, b)?).map_err(to_py)
}

#[pyfunction]
fn value_dt(x: f64, t: f64, p: f64, a: f64, b: f64) -> PyResult<f64> {
    core1d::value_dt(x, t, p, &params(a, b)?).map_err(to_py)
}

/// Position at time `s` of the optimal path ending at `x` at time `t`.
#[pyfunction]
fn trajectory(s: f64, x: f64, t: f64, p: f64, a: f64, b: f64) -> PyResult<f64> {
    core1d::trajectory(s, x, t, p, &params(a, b)?).map_err(to_py)
}

/// Region name (`"omega1"` .. `"omega5"`); needs `p >= 0`.
#[pyfunction]
fn classify_region(x: f64, t: f64, p: f64, a: f64, b: f64) -> PyResult<String> {
    let r = core1d::classify_region(x, t, p, &params(a, b)?).map_err(to_py)?;
    Ok(format!("{r:?}").to_lowercase())
}

/// `argmin_p -V(x, t; p) + lam/2 (p - c)^2`, with the winning candidate name.
#[pyfunction]
#[pyo3(signature = (x, t, c, lam, a, b, newton_steps=None))]
fn prox(x: f64, t: f64, c: f64, lam: f64, a: f64, b: f64, newton_steps: Option<usize>) -> PyResult<(f64, String)> {
    let q = ProxQuery::new(x, t, c, lam, params(a, b)?).map_err(to_py)?;
    let cfg = newton_steps.map_or_else(NewtonConfig::default, NewtonConfig::fixed);
    let s = prox_neg_value(&q, &cfg).map_err(to_py)?;
    Ok((s.p_star, format!("{:?}", s.candidate).to_lowercase()))
}

#[pyclass(name = "SolveResult", frozen, get_all)]
struct PySolveResult {
    value: f64,
    p_star: Vec<f64>,
    iterations: usize,
    converged: bool,
    branch: Option<usize>,
}

#[pymethods]
impl PySolveResult {
    fn __repr__(&self) -> String {
        format!("SolveResult(value={}, iterations={}, converged={})", self.value, self.iterations, self.converged)
    }
}

/// A problem in `n` dimensions.
#[pyclass(name = "Problem", frozen)]
struct PyProblem {
    spec: ProblemSpec,
}

fn admm(eps: f64, max_iter: usize, lam: f64) -> PyResult<AdmmConfig> {
    let cfg = AdmmConfig { lambda: lam, eps, max_iter, ..AdmmConfig::default() };
    cfg.validate().map_err(to_py)?;
    Ok(cfg)
}

#[pymethods]
impl PyProblem {
    /// `problem_json` holds `a`, `b`, `cost` and optionally `transform`.
    #[new]
    fn new(problem_json: &str) -> PyResult<Self> {
        let desc: ProblemDescriptor =
            serde_json::from_str(problem_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(Self { spec: ProblemSpec::from_descriptor(desc).map_err(to_py)? })
    }

    /// The reference configurations: `kind` is one of `quadratic`,
    /// `ellipsoid_norm`, `shifted_l1_squared`, `min_of_quadratics`.
    #[staticmethod]
    fn reference(n: usize, kind: &str) -> PyResult<Self> {
        let kind: ReferenceCost =
            serde_json::from_value(serde_json::Value::String(kind.into())).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(Self { spec: reference_problem(n, kind).map_err(to_py)? })
    }

    #[getter]
    fn n(&self) -> usize {
        self.spec.n()
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(self.spec.descriptor()).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    fn initial_cost(&self, x: Vec<f64>) -> PyResult<f64> {
        self.spec.initial_cost(&x).map_err(to_py)
    }

    #[pyo3(signature = (x, t, eps=1e-8, max_iter=10_000, lam=1.0))]
    fn solve(&self, py: Python<'_>, x: Vec<f64>, t: f64, eps: f64, max_iter: usize, lam: f64) -> PyResult<PySolveResult> {
        let cfg = admm(eps, max_iter, lam)?;
        let r = py.detach(|| hopf_solver::solve(&x, t, &self.spec, &cfg)).map_err(to_py)?;
        Ok(PySolveResult { value: r.value, p_star: r.p_star, iterations: r.iterations, converged: r.converged, branch: r.branch })
    }

    /// `(times, states)` with `samples` equally spaced times on `[0, t]`.
    #[pyo3(signature = (x, t, samples=101, eps=1e-8, max_iter=10_000))]
    fn trajectory(
        &self,
        py: Python<'_>,
        x: Vec<f64>,
        t: f64,
        samples: usize,
        eps: f64,
        max_iter: usize,
    ) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
        let cfg = admm(eps, max_iter, 1.0)?;
        let sample = py
            .detach(|| {
                let r = hopf_solver::solve(&x, t, &self.spec, &cfg)?;
                optimal_trajectory(&x, t, &r, &self.spec, &uniform_times(t, samples))
            })
            .map_err(to_py)?;
        Ok((sample.times, sample.states))
    }

    /// Values on a two-coordinate grid, one row-major list per time (first
    /// axis outer).
    #[pyo3(signature = (axes, ranges, counts, times, base=None))]
    fn grid(
        &self,
        py: Python<'_>,
        axes: [usize; 2],
        ranges: [[f64; 2]; 2],
        counts: [usize; 2],
        times: Vec<f64>,
        base: Option<Vec<f64>>,
    ) -> PyResult<Vec<Vec<f64>>> {
        let req = GridRequest { axes, ranges, counts, base, times };
        let slices = py.detach(|| evaluate_grid(&self.spec, &req, &AdmmConfig::default())).map_err(to_py)?;
        Ok(slices.into_iter().map(|s| s.into_iter().map(|p| p.value).collect()).collect())
    }

    fn __repr__(&self) -> String {
        format!("Problem(n={})", self.spec.n())
    }
}

#[pymodule]
#[pyo3(name = "hopf_hj")]
fn hopf_hj_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(value, m)?)?;
    m.add_function(wrap_pyfunction!(value_dp, m)?)?;
    m.add_function(wrap_pyfunction!(value_dx, m)?)?;
    m.add_function(wrap_pyfunction!(value_dt, m)?)?;
    m.add_function(wrap_pyfunction!(trajectory, m)?)?;
    m.add_function(wrap_pyfunction!(classify_region, m)?)?;
    m.add_function(wrap_pyfunction!(prox, m)?)?;
    m.add_class::<PyProblem>()?;
    m.add_class::<PySolveResult>()?;
    Ok(())
}
