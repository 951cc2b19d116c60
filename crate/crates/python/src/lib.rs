//! Python bindings for the `aloq` crate.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;

use aloq::acquisition::{direct_maximize as core_direct, DirectConfig};
use aloq::aloq_loop::{self, ChainSizes, RunConfig, Trace, Variant};
use aloq::gp::{self, Dataset, GpPosterior, HyperSample, InputPoint, KernelHyper, WarpParams};
use aloq::harness::{self, ExperimentSpec};
use aloq::quadrature::{self, QuadratureRule};
use aloq::sampler::{self, ChainConfig};
use aloq::tasks::{self, Sense};
use aloq::AloqError;

create_exception!(aloq_py, AloqPyError, PyException);
create_exception!(aloq_py, NumericalError, AloqPyError);

fn to_py(err: AloqError) -> PyErr {
    if err.is_numerical() {
        NumericalError::new_err(err.to_string())
    } else {
        match err {
            AloqError::Domain(_) | AloqError::Config(_) | AloqError::Unknown { .. } => {
                PyValueError::new_err(err.to_string())
            }
            other => AloqPyError::new_err(other.to_string()),
        }
    }
}

fn chain_by_name(name: &str) -> PyResult<ChainSizes> {
    match name {
        "standard" => Ok(ChainSizes::STANDARD),
        "reduced" => Ok(ChainSizes::REDUCED),
        _ => Err(PyValueError::new_err(format!("unknown chain profile `{name}`"))),
    }
}

fn variant_by_name(name: &str) -> PyResult<Variant> {
    name.parse::<Variant>().map_err(to_py)
}

/// A benchmark task built by name.
#[pyclass(name = "Task", module = "aloq_py", frozen)]
struct PyTask {
    inner: Box<dyn tasks::Task>,
    seed: u64,
}

#[pymethods]
impl PyTask {
    #[new]
    #[pyo3(signature = (name, seed = 0))]
    fn new(name: &str, seed: u64) -> PyResult<Self> {
        Ok(PyTask { inner: tasks::task_by_name(name, seed).map_err(to_py)?, seed })
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name().to_string()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.seed
    }

    #[getter]
    fn d_policy(&self) -> usize {
        self.inner.d_policy()
    }

    #[getter]
    fn d_env(&self) -> usize {
        self.inner.d_env()
    }

    #[getter]
    fn sense(&self) -> &'static str {
        match self.inner.sense() {
            Sense::Maximize => "maximize",
            Sense::Minimize => "minimize",
        }
    }

    #[getter]
    fn policy_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let b = self.inner.policy_bounds();
        (b.lower.clone(), b.upper.clone())
    }

    #[getter]
    fn default_kappa(&self) -> f64 {
        self.inner.default_kappa()
    }

    #[getter]
    fn warnings(&self) -> Vec<String> {
        self.inner.warnings()
    }

    fn evaluate(&self, pi: Vec<f64>, theta: Vec<f64>) -> PyResult<f64> {
        self.inner.evaluate(&pi, &theta).map_err(to_py)
    }

    fn is_sre(&self, pi: Vec<f64>, theta: Vec<f64>) -> bool {
        self.inner.is_sre(&pi, &theta)
    }

    fn exact_fbar(&self, pi: Vec<f64>) -> PyResult<f64> {
        self.inner.exact_fbar(&pi).map_err(to_py)
    }

    fn sre_probability(&self, pi: Vec<f64>) -> PyResult<f64> {
        self.inner.sre_probability(&pi).map_err(to_py)
    }

    /// Task constants as a JSON string.
    fn constants(&self) -> String {
        self.inner.constants().to_string()
    }

    fn __repr__(&self) -> String {
        format!("Task({:?}, seed={})", self.inner.name(), self.seed)
    }
}

/// The record of one optimisation run.
#[pyclass(name = "Trace", module = "aloq_py", frozen)]
struct PyTrace {
    inner: Trace,
}

#[pymethods]
impl PyTrace {
    #[getter]
    fn task(&self) -> String {
        self.inner.task.clone()
    }

    #[getter]
    fn variant(&self) -> String {
        self.inner.variant.to_string()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[getter]
    fn final_policy(&self) -> Vec<f64> {
        self.inner.final_policy.clone()
    }

    #[getter]
    fn final_estimate(&self) -> f64 {
        self.inner.final_estimate
    }

    #[getter]
    fn warnings(&self) -> Vec<String> {
        self.inner.warnings.clone()
    }

    #[getter]
    fn phases(&self) -> Vec<&'static str> {
        self.inner.calls.iter().map(|c| c.phase.name()).collect()
    }

    #[getter]
    fn policies(&self) -> Vec<Vec<f64>> {
        self.inner.calls.iter().map(|c| c.policy.clone()).collect()
    }

    #[getter]
    fn thetas(&self) -> Vec<Vec<f64>> {
        self.inner.calls.iter().map(|c| c.theta.clone()).collect()
    }

    #[getter]
    fn values(&self) -> Vec<f64> {
        self.inner.calls.iter().map(|c| c.value).collect()
    }

    #[getter]
    fn incumbents(&self) -> Vec<Vec<f64>> {
        self.inner.calls.iter().map(|c| c.incumbent.clone()).collect()
    }

    fn __len__(&self) -> usize {
        self.inner.calls.len()
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| to_py(e.into()))
    }

    fn __repr__(&self) -> String {
        format!(
            "Trace(task={:?}, variant={}, seed={}, calls={})",
            self.inner.task,
            self.inner.variant,
            self.inner.seed,
            self.inner.calls.len()
        )
    }
}

/// Runs one variant of the optimiser on a task.
#[pyfunction]
#[pyo3(signature = (task, variant = "aloq", budget = 200, seed = 0, kappa = None, init_size = None, chain = "reduced", mc_count = None, direct_budget = None))]
#[allow(clippy::too_many_arguments)]
fn run(
    py: Python<'_>,
    task: &PyTask,
    variant: &str,
    budget: usize,
    seed: u64,
    kappa: Option<f64>,
    init_size: Option<usize>,
    chain: &str,
    mc_count: Option<usize>,
    direct_budget: Option<usize>,
) -> PyResult<PyTrace> {
    let mut config = RunConfig::new(variant_by_name(variant)?, budget, seed);
    config.kappa = kappa;
    config.init_size = init_size;
    config.chain = chain_by_name(chain)?;
    config.mc_count = mc_count;
    if let Some(b) = direct_budget {
        config.direct.budget = b;
    }
    let inner = py.detach(|| aloq_loop::run(task.inner.as_ref(), &config)).map_err(to_py)?;
    Ok(PyTrace { inner })
}

/// Runs a variants-by-seeds grid and writes one CSV per run; returns the paths.
#[pyfunction]
#[pyo3(signature = (task, variants, seeds, budget, out_dir, chain = "reduced", jobs = 1, timing = true, kappa = None))]
#[allow(clippy::too_many_arguments)]
fn run_experiment(
    py: Python<'_>,
    task: &str,
    variants: Vec<String>,
    seeds: Vec<u64>,
    budget: usize,
    out_dir: PathBuf,
    chain: &str,
    jobs: usize,
    timing: bool,
    kappa: Option<f64>,
) -> PyResult<Vec<PathBuf>> {
    let variants = variants.iter().map(|v| variant_by_name(v)).collect::<PyResult<Vec<_>>>()?;
    let mut spec = ExperimentSpec::new(task, variants, seeds, budget, out_dir);
    spec.chain = chain_by_name(chain)?;
    spec.jobs = jobs;
    spec.timing = timing;
    spec.kappa = kappa;
    py.detach(|| harness::run_experiment(&spec)).map_err(to_py)
}

/// Summarises a results directory; returns the summary as a JSON string.
#[pyfunction]
fn aggregate(dir: PathBuf) -> PyResult<String> {
    let summary = harness::aggregate(&dir).map_err(to_py)?;
    serde_json::to_string(&summary).map_err(|e| to_py(e.into()))
}

/// A Gaussian process over joint `(pi, theta)` inputs on the unit box with
/// fixed hyperparameters.
#[pyclass(name = "Gp", module = "aloq_py", frozen)]
struct PyGp {
    post: GpPosterior,
    d_policy: usize,
}

fn rule_from(points: Vec<Vec<f64>>, weights: Vec<f64>) -> PyResult<QuadratureRule> {
    if points.len() != weights.len() || points.is_empty() {
        return Err(PyValueError::new_err("points and weights must be non-empty and of equal length"));
    }
    Ok(QuadratureRule { points, weights })
}

impl PyGp {
    fn queries(&self, policies: Vec<Vec<f64>>, envs: Vec<Vec<f64>>) -> PyResult<Vec<InputPoint>> {
        if policies.len() != envs.len() {
            return Err(PyValueError::new_err("policies and envs must have equal length"));
        }
        Ok(policies.into_iter().zip(envs).map(|(p, t)| InputPoint::new(p, t)).collect())
    }
}

#[pymethods]
impl PyGp {
    #[new]
    #[pyo3(signature = (policies, envs, returns, signal_var, lengthscales, noise_var, alpha = None, beta = None))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        policies: Vec<Vec<f64>>,
        envs: Vec<Vec<f64>>,
        returns: Vec<f64>,
        signal_var: f64,
        lengthscales: Vec<f64>,
        noise_var: f64,
        alpha: Option<Vec<f64>>,
        beta: Option<Vec<f64>>,
    ) -> PyResult<Self> {
        if policies.len() != envs.len() || policies.len() != returns.len() || policies.is_empty() {
            return Err(PyValueError::new_err("policies, envs and returns must be non-empty and of equal length"));
        }
        let mut data = Dataset::new(policies[0].len(), envs[0].len());
        for ((p, t), y) in policies.into_iter().zip(envs).zip(returns) {
            data.push(InputPoint::new(p, t), y).map_err(to_py)?;
        }
        let warp = match (alpha, beta) {
            (Some(alpha), Some(beta)) => Some(WarpParams { alpha, beta }),
            (None, None) => None,
            _ => return Err(PyValueError::new_err("alpha and beta must be given together")),
        };
        let hyper = HyperSample::new(KernelHyper::new(signal_var, lengthscales, noise_var), warp);
        let post = gp::gp_fit(&data, &hyper).map_err(to_py)?;
        Ok(PyGp { post, d_policy: data.d_policy() })
    }

    #[getter]
    fn d_policy(&self) -> usize {
        self.d_policy
    }

    /// Predictive mean vector and covariance matrix of the latent function.
    fn predict(&self, policies: Vec<Vec<f64>>, envs: Vec<Vec<f64>>) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
        gp::gp_predict(&self.post, &self.queries(policies, envs)?).map_err(to_py)
    }

    /// Mean and variance of `fbar(pi)` under the weighted nodes.
    fn fbar_moments(&self, pi: Vec<f64>, points: Vec<Vec<f64>>, weights: Vec<f64>) -> PyResult<(f64, f64)> {
        let est = quadrature::fbar_moments(&pi, &self.post, &rule_from(points, weights)?).map_err(to_py)?;
        Ok((est.mean, est.variance))
    }

    fn lookahead_variance(
        &self,
        pi: Vec<f64>,
        theta: Vec<f64>,
        points: Vec<Vec<f64>>,
        weights: Vec<f64>,
    ) -> PyResult<f64> {
        quadrature::lookahead_variance(&pi, &theta, &self.post, &rule_from(points, weights)?).map_err(to_py)
    }

    /// Index of the node minimising the lookahead variance.
    fn select_theta(&self, pi: Vec<f64>, points: Vec<Vec<f64>>, weights: Vec<f64>) -> PyResult<usize> {
        quadrature::select_theta(&pi, &self.post, &rule_from(points, weights)?).map_err(to_py)
    }
}

/// Maximises a Python callable over the unit box with DIRECT. Returns
/// `(argmax, value, evaluations)`.
#[pyfunction]
#[pyo3(signature = (objective, dim, budget = 500, min_diameter = 1e-4, epsilon = 1e-4))]
fn direct_maximize(
    objective: Bound<'_, PyAny>,
    dim: usize,
    budget: usize,
    min_diameter: f64,
    epsilon: f64,
) -> PyResult<(Vec<f64>, f64, usize)> {
    let config = DirectConfig { budget, min_diameter, epsilon };
    let mut py_err = None;
    let result = core_direct(
        |x| match objective.call1((x.to_vec(),)).and_then(|v| v.extract::<f64>()) {
            Ok(v) => Ok(v),
            Err(e) => {
                let msg = e.to_string();
                py_err = Some(e);
                Err(AloqError::Config(msg))
            }
        },
        dim,
        &config,
    );
    match result {
        Ok(r) => Ok((r.argmax, r.value, r.evaluations)),
        Err(e) => Err(py_err.unwrap_or_else(|| to_py(e))),
    }
}

/// Slice-samples an unnormalised log density given as a Python callable.
#[pyfunction]
#[pyo3(signature = (log_density, initial_point, n_samples, burn_in = 50, thinning = 1, seed = 0, step_width = 1.0))]
fn slice_sample(
    log_density: Bound<'_, PyAny>,
    initial_point: Vec<f64>,
    n_samples: usize,
    burn_in: usize,
    thinning: usize,
    seed: u64,
    step_width: f64,
) -> PyResult<Vec<Vec<f64>>> {
    let mut config = ChainConfig::new(seed, initial_point);
    config.n_samples = n_samples;
    config.burn_in = burn_in;
    config.thinning = thinning;
    config.step_width = vec![step_width; config.initial_point.len()];
    let mut py_err = None;
    let result = sampler::slice_sample(
        |x| match log_density.call1((x.to_vec(),)).and_then(|v| v.extract::<f64>()) {
            Ok(v) => v,
            Err(e) => {
                if py_err.is_none() {
                    py_err = Some(e);
                }
                f64::NAN
            }
        },
        &config,
    );
    if let Some(e) = py_err {
        return Err(e);
    }
    result.map_err(to_py)
}

/// Per-dimension Beta-CDF warp of a point in the unit box.
#[pyfunction]
fn beta_warp(x: Vec<f64>, alpha: Vec<f64>, beta: Vec<f64>) -> PyResult<Vec<f64>> {
    gp::beta_warp(&x, &WarpParams { alpha, beta }).map_err(to_py)
}

#[pyfunction]
fn fsre1(pi: f64, theta: f64) -> PyResult<f64> {
    tasks::fsre1(pi, theta).map_err(to_py)
}

#[pyfunction]
fn fsre2(pi: f64, theta: f64) -> PyResult<f64> {
    tasks::fsre2(pi, theta).map_err(to_py)
}

#[pymodule]
pub fn aloq_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("AloqError", m.py().get_type::<AloqPyError>())?;
    m.add("NumericalError", m.py().get_type::<NumericalError>())?;
    m.add("TASK_NAMES", tasks::TASK_NAMES.to_vec())?;
    m.add_class::<PyTask>()?;
    m.add_class::<PyTrace>()?;
    m.add_class::<PyGp>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(aggregate, m)?)?;
    m.add_function(wrap_pyfunction!(direct_maximize, m)?)?;
    m.add_function(wrap_pyfunction!(slice_sample, m)?)?;
    m.add_function(wrap_pyfunction!(beta_warp, m)?)?;
    m.add_function(wrap_pyfunction!(fsre1, m)?)?;
    m.add_function(wrap_pyfunction!(fsre2, m)?)?;
    Ok(())
}
