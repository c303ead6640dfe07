//! Python bindings for the bounds estimator, simulators, policies and the
//! experiment harness.

use std::path::PathBuf;

use ivbounds_core as core;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn err(e: core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(name = "EstimatorConfig", frozen)]
struct PyEstimatorConfig(core::EstimatorConfig);

#[pymethods]
impl PyEstimatorConfig {
    #[new]
    #[pyo3(signature = (lambda_c, lambda_s, rho = 1.0))]
    fn new(lambda_c: f64, lambda_s: f64, rho: f64) -> PyResult<Self> {
        core::EstimatorConfig::new(lambda_c, lambda_s, rho).map(Self).map_err(err)
    }

    #[getter]
    fn lambda_c(&self) -> f64 {
        self.0.lambda_c
    }

    #[getter]
    fn lambda_s(&self) -> f64 {
        self.0.lambda_s
    }

    fn __repr__(&self) -> String {
        format!(
            "EstimatorConfig(lambda_c={}, lambda_s={}, rho={})",
            self.0.lambda_c, self.0.lambda_s, self.0.kernel.rho
        )
    }
}

#[pyclass(name = "Query", frozen, from_py_object)]
#[derive(Clone)]
struct PyQuery(core::Query);

#[pymethods]
impl PyQuery {
    #[staticmethod]
    fn partial_derivative(index: usize, x_star: Vec<f64>) -> Self {
        Self(core::Query::partial_derivative(index, x_star))
    }

    #[staticmethod]
    fn point_evaluation(x_star: Vec<f64>) -> Self {
        Self(core::Query::point_evaluation(x_star))
    }

    /// Weighted sum of other queries, given as `(weight, query)` pairs.
    #[staticmethod]
    fn linear_combination(terms: Vec<(f64, PyQuery)>) -> Self {
        Self(core::Query::LinearCombination {
            terms: terms.into_iter().map(|(w, q)| (w, q.0)).collect(),
        })
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.0)
    }
}

#[pyclass(name = "Bounds", frozen)]
struct PyBounds(core::BoundsEstimate);

#[pymethods]
impl PyBounds {
    #[getter]
    fn lower(&self) -> f64 {
        self.0.lower
    }

    #[getter]
    fn upper(&self) -> f64 {
        self.0.upper
    }

    #[getter]
    fn gap(&self) -> f64 {
        self.0.gap
    }

    #[getter]
    fn theta_lower(&self) -> Vec<f64> {
        self.0.theta_lower.clone()
    }

    #[getter]
    fn theta_upper(&self) -> Vec<f64> {
        self.0.theta_upper.clone()
    }

    fn contains(&self, value: f64) -> bool {
        self.0.contains(value)
    }

    fn __repr__(&self) -> String {
        format!("Bounds(lower={}, upper={}, gap={})", self.0.lower, self.0.upper, self.0.gap)
    }
}

#[pyclass(name = "Dataset")]
struct PyDataset(core::Dataset);

#[pymethods]
impl PyDataset {
    #[new]
    #[pyo3(signature = (z, x, y, round = 1))]
    fn new(z: Vec<Vec<f64>>, x: Vec<Vec<f64>>, y: Vec<f64>, round: usize) -> PyResult<Self> {
        let n = y.len();
        let data = core::Dataset { z, x, y, round: vec![round; n] };
        data.validate().map_err(err)?;
        Ok(Self(data))
    }

    #[getter]
    fn z(&self) -> Vec<Vec<f64>> {
        self.0.z.clone()
    }

    #[getter]
    fn x(&self) -> Vec<Vec<f64>> {
        self.0.x.clone()
    }

    #[getter]
    fn y(&self) -> Vec<f64> {
        self.0.y.clone()
    }

    fn extend(&mut self, other: &PyDataset) {
        self.0.extend(&other.0);
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

#[pyclass(name = "GmmPolicy", frozen)]
struct PyGmmPolicy(core::GmmPolicy);

#[pymethods]
impl PyGmmPolicy {
    #[new]
    fn new(weight_logits: Vec<f64>, means: Vec<Vec<f64>>, log_diag_covs: Vec<Vec<f64>>) -> PyResult<Self> {
        core::GmmPolicy::new(weight_logits, means, log_diag_covs).map(Self).map_err(err)
    }

    #[staticmethod]
    fn gaussian(mean: Vec<f64>, variance: f64) -> PyResult<Self> {
        core::GmmPolicy::gaussian(mean, variance).map(Self).map_err(err)
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.0.weights()
    }

    #[getter]
    fn means(&self) -> Vec<Vec<f64>> {
        self.0.means.clone()
    }

    #[getter]
    fn variances(&self) -> Vec<Vec<f64>> {
        self.0.variances()
    }

    fn sample(&self, n: usize, seed: u64) -> Vec<Vec<f64>> {
        self.0.sample_policy(n, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    fn log_density(&self, z: Vec<f64>) -> PyResult<f64> {
        self.0.log_density(&z).map_err(err)
    }

    /// Gradient of the log-density, flattened as logits, means, log-variances.
    fn score(&self, z: Vec<f64>) -> PyResult<Vec<f64>> {
        self.0.score(&z).map(|g| g.to_flat()).map_err(err)
    }
}

#[pyclass(name = "Scenario", frozen)]
struct PyScenario(core::Scenario);

#[pymethods]
impl PyScenario {
    #[staticmethod]
    #[pyo3(signature = (alpha = 1.0, beta = 1.0))]
    fn low_dim(alpha: f64, beta: f64) -> Self {
        Self(core::Scenario::low_dim(alpha, beta))
    }

    #[staticmethod]
    #[pyo3(signature = (d_z, d_x, alpha = 1.0, beta = 1.0))]
    fn high_dim(d_z: usize, d_x: usize, alpha: f64, beta: f64) -> Self {
        Self(core::Scenario::high_dim(d_z, d_x, alpha, beta))
    }

    #[staticmethod]
    fn linear_underspecified(x_star: Vec<f64>) -> Self {
        Self(core::Scenario::linear_underspecified(x_star))
    }

    #[staticmethod]
    fn quadratic_identifiable(x_star: Vec<f64>) -> Self {
        Self(core::Scenario::quadratic_identifiable(x_star))
    }

    #[pyo3(signature = (policy, n, seed, round = 1))]
    fn sample(&self, policy: &PyGmmPolicy, n: usize, seed: u64, round: usize) -> PyResult<PyDataset> {
        self.0
            .sample(&policy.0, n, round, &mut ChaCha8Rng::seed_from_u64(seed))
            .map(PyDataset)
            .map_err(err)
    }

    fn structural_f(&self, x: Vec<f64>) -> PyResult<f64> {
        self.0.structural_f(&x).map_err(err)
    }

    fn true_query(&self, query: &PyQuery) -> PyResult<f64> {
        self.0.true_query(&query.0).map_err(err)
    }
}

#[pyfunction]
fn query_bounds(data: &PyDataset, query: &PyQuery, config: &PyEstimatorConfig) -> PyResult<PyBounds> {
    core::query_bounds(&data.0, &query.0, &config.0).map(PyBounds).map_err(err)
}

#[pyfunction]
fn dataset_gap(data: &PyDataset, query: &PyQuery, config: &PyEstimatorConfig) -> PyResult<f64> {
    core::dataset_gap(&data.0, &query.0, &config.0).map_err(err)
}

#[pyfunction]
fn oracle_bound(data: &PyDataset, query: &PyQuery, config: &PyEstimatorConfig, upper: bool) -> PyResult<f64> {
    let sign = if upper { core::Sign::Minus } else { core::Sign::Plus };
    core::oracle_bound_value(&data.0, &query.0, &config.0, sign).map_err(err)
}

/// Runs the experiment described by a JSON config and returns the per-round
/// summary as a list of dicts. Writes the usual output files when `out_dir`
/// is given.
#[pyfunction]
#[pyo3(signature = (config_json, out_dir = None))]
fn run_experiment(py: Python<'_>, config_json: &str, out_dir: Option<PathBuf>) -> PyResult<Vec<Py<PyAny>>> {
    let cfg = core::harness::RunConfig::from_json(config_json).map_err(err)?;
    let result = py
        .detach(|| core::harness::run_experiment(&cfg))
        .map_err(err)?;
    if let Some(dir) = out_dir {
        core::harness::emit_outputs(&result, &dir).map_err(err)?;
    }
    result
        .summary
        .rounds
        .iter()
        .map(|r| {
            let d = pyo3::types::PyDict::new(py);
            d.set_item("strategy", r.strategy.name())?;
            d.set_item("t", r.t)?;
            d.set_item("count", r.count)?;
            d.set_item("mean_lower", r.mean_lower)?;
            d.set_item("mean_upper", r.mean_upper)?;
            d.set_item("mean_gap", r.mean_gap)?;
            Ok(d.into_any().unbind())
        })
        .collect()
}

#[pymodule]
fn ivbounds(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyEstimatorConfig>()?;
    m.add_class::<PyQuery>()?;
    m.add_class::<PyBounds>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyGmmPolicy>()?;
    m.add_class::<PyScenario>()?;
    m.add_function(wrap_pyfunction!(query_bounds, m)?)?;
    m.add_function(wrap_pyfunction!(dataset_gap, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_bound, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
