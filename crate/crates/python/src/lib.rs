//! Python bindings for `delayshare`.
//!
//! Models and strategy profiles are wrapped as classes; every analysis
//! returns plain Python containers built from the crate's JSON encodings.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use serde::Serialize;

use delayshare::cli::{self, Command, RunConfig};
use delayshare::dp::{pbp_sweep_with_tolerance, SweepResult};
use delayshare::filter::{bayes_oracle_belief, initial_belief};
use delayshare::{falsify, oracle, validate_model, Error, InfoRealization, ModelSpec, StrategyProfile};

fn err(e: Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn checked(model: &PyModel, agent: usize) -> PyResult<usize> {
    if agent < model.inner.agents {
        Ok(agent)
    } else {
        Err(PyValueError::new_err(format!("agent {agent} out of range")))
    }
}

fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

/// A finite delayed-sharing decentralized POMDP.
#[pyclass(name = "Model", module = "delayshare_py", frozen)]
pub struct PyModel {
    inner: ModelSpec,
}

#[pymethods]
impl PyModel {
    /// One of the canonical instances: CANON-2A, CANON-2B, CANON-1.
    #[staticmethod]
    fn canonical(name: &str) -> PyResult<Self> {
        delayshare::canonical_instance(name).map(|inner| PyModel { inner }).map_err(err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        ModelSpec::from_json_str(text).map(|inner| PyModel { inner }).map_err(err)
    }

    fn to_json(&self) -> String {
        self.inner.to_json_string()
    }

    #[getter]
    fn agents(&self) -> usize {
        self.inner.agents
    }

    #[getter]
    fn delay(&self) -> usize {
        self.inner.delay
    }

    #[getter]
    fn horizon(&self) -> usize {
        self.inner.horizon
    }

    #[getter]
    fn state_size(&self) -> usize {
        self.inner.state_size
    }

    /// Violations as a list of dicts; empty when the model is valid.
    fn validate(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &validate_model(&self.inner))
    }

    /// The same model with every observation kernel independent of the state.
    fn uninformative(&self) -> Self {
        PyModel { inner: self.inner.with_uninformative_observations() }
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(K={}, n={}, T={}, states={})",
            self.inner.agents, self.inner.delay, self.inner.horizon, self.inner.state_size
        )
    }
}

/// A deterministic strategy profile, one table per agent.
#[pyclass(name = "Strategy", module = "delayshare_py", frozen)]
pub struct PyStrategy {
    inner: StrategyProfile,
}

#[pymethods]
impl PyStrategy {
    #[staticmethod]
    fn constant(model: &PyModel, action: usize) -> Self {
        PyStrategy { inner: StrategyProfile::constant(&model.inner, action) }
    }

    #[staticmethod]
    fn random(model: &PyModel, seed: u64) -> PyResult<Self> {
        StrategyProfile::random(&model.inner, seed).map(|inner| PyStrategy { inner }).map_err(err)
    }

    #[staticmethod]
    fn from_json(model: &PyModel, text: &str) -> PyResult<Self> {
        StrategyProfile::from_json_str(&model.inner, text).map(|inner| PyStrategy { inner }).map_err(err)
    }

    fn to_json(&self) -> String {
        self.inner.to_json_string()
    }

    /// Copy with agent `agent`'s table taken from `other`.
    fn with_agent_from(&self, agent: usize, other: &PyStrategy) -> PyResult<Self> {
        let table = other
            .inner
            .agents
            .get(agent)
            .ok_or_else(|| PyValueError::new_err("agent out of range"))?;
        Ok(PyStrategy { inner: self.inner.with_agent(agent, table.clone()) })
    }

    fn __repr__(&self) -> String {
        let entries: usize = self.inner.agents.iter().flat_map(|a| &a.stages).map(|m| m.len()).sum();
        format!("Strategy(agents={}, entries={entries})", self.inner.agents.len())
    }
}

/// Expected total cost by trajectory enumeration.
#[pyfunction]
fn enumerate_cost(model: &PyModel, strategy: &PyStrategy) -> PyResult<f64> {
    oracle::enumerate_cost(&model.inner, &strategy.inner).map_err(err)
}

/// Expected total cost through one agent's private posteriors.
#[pyfunction]
fn cost_via_beliefs(model: &PyModel, strategy: &PyStrategy, agent: usize) -> PyResult<f64> {
    let agent = checked(model, agent)?;
    delayshare::cost_via_beliefs(&model.inner, &strategy.inner, agent).map_err(err)
}

/// Posterior after the first observation, as `{t, agent, support}`.
#[pyfunction]
fn initial_posterior(py: Python<'_>, model: &PyModel, agent: usize, y0: usize) -> PyResult<Py<PyAny>> {
    let agent = checked(model, agent)?;
    to_py(py, &initial_belief(&model.inner, agent, y0).map_err(err)?)
}

/// Posterior at the realization with canonical key `key`, by enumeration.
#[pyfunction]
fn oracle_posterior(py: Python<'_>, model: &PyModel, strategy: &PyStrategy, agent: usize, key: &str) -> PyResult<Py<PyAny>> {
    let agent = checked(model, agent)?;
    let info = InfoRealization::parse_key(key, agent, model.inner.delay).map_err(err)?;
    to_py(py, &bayes_oracle_belief(&model.inner, &strategy.inner, agent, &info).map_err(err)?)
}

/// Dynamic-programming best response; returns `(value, profile)` with the
/// agent's table replaced.
#[pyfunction]
fn solve_best_response(model: &PyModel, strategy: &PyStrategy, agent: usize) -> PyResult<(f64, PyStrategy)> {
    let agent = checked(model, agent)?;
    let (table, best) = delayshare::solve_best_response(&model.inner, agent, &strategy.inner).map_err(err)?;
    Ok((table.initial_value(), PyStrategy { inner: strategy.inner.with_agent(agent, best) }))
}

/// Brute-force best response; same return shape as `solve_best_response`.
#[pyfunction]
fn brute_force_best_response(model: &PyModel, strategy: &PyStrategy, agent: usize) -> PyResult<(f64, PyStrategy)> {
    let agent = checked(model, agent)?;
    let (value, best) = oracle::brute_force_best_response(&model.inner, &strategy.inner, agent).map_err(err)?;
    Ok((value, PyStrategy { inner: strategy.inner.with_agent(agent, best) }))
}

/// Best-response sweep; returns `(profile, trace, converged)`.
#[pyfunction]
#[pyo3(signature = (model, strategy, max_rounds = 32, tol_improve = delayshare::TOL_IMPROVE))]
fn pbp_sweep(model: &PyModel, strategy: &PyStrategy, max_rounds: usize, tol_improve: f64) -> PyResult<(PyStrategy, Vec<f64>, bool)> {
    let SweepResult { profile, trace, converged, .. } =
        pbp_sweep_with_tolerance(&model.inner, &strategy.inner, max_rounds, tol_improve).map_err(err)?;
    Ok((PyStrategy { inner: profile }, trace, converged))
}

#[pyfunction]
fn verify_pbp(py: Python<'_>, model: &PyModel, strategy: &PyStrategy) -> PyResult<Py<PyAny>> {
    to_py(py, &oracle::verify_pbp(&model.inner, &strategy.inner).map_err(err)?)
}

#[pyfunction]
fn check_conditional_independence(py: Python<'_>, model: &PyModel, strategy: &PyStrategy, agent: usize, t: usize) -> PyResult<Py<PyAny>> {
    let agent = checked(model, agent)?;
    to_py(py, &falsify::check_conditional_independence(&model.inner, &strategy.inner, agent, t).map_err(err)?)
}

#[pyfunction]
fn check_policy_independence(py: Python<'_>, model: &PyModel, a: &PyStrategy, b: &PyStrategy, agent: usize) -> PyResult<Py<PyAny>> {
    let agent = checked(model, agent)?;
    to_py(py, &falsify::check_policy_independence(&model.inner, &a.inner, &b.inner, agent).map_err(err)?)
}

#[pyfunction]
fn check_conditional_markov(py: Python<'_>, model: &PyModel, strategy: &PyStrategy, agent: usize) -> PyResult<Py<PyAny>> {
    let agent = checked(model, agent)?;
    to_py(py, &falsify::check_conditional_markov(&model.inner, &strategy.inner, agent).map_err(err)?)
}

#[pyfunction]
fn check_k1_reduction(py: Python<'_>, model: &PyModel) -> PyResult<Py<PyAny>> {
    to_py(py, &falsify::check_k1_reduction(&model.inner).map_err(err)?)
}

#[pyfunction]
fn check_payoff_identity(py: Python<'_>, model: &PyModel, strategy: &PyStrategy) -> PyResult<Py<PyAny>> {
    to_py(py, &falsify::check_payoff_identity(&model.inner, &strategy.inner).map_err(err)?)
}

/// Runs a CLI command in process and returns `(exit_code, report)`.
#[pyfunction]
#[pyo3(signature = (command, model = "CANON-2A", agent = None))]
fn run(py: Python<'_>, command: &str, model: &str, agent: Option<usize>) -> PyResult<(i32, Py<PyAny>)> {
    let command = <Command as clap::ValueEnum>::from_str(command, true).map_err(PyValueError::new_err)?;
    let mut cfg = RunConfig::new(command, model);
    cfg.agent = agent;
    let outcome = cli::run(&cfg).map_err(err)?;
    Ok((outcome.exit_code, to_py(py, &outcome.report)?))
}

#[pymodule]
fn delayshare_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_class::<PyStrategy>()?;
    m.add_function(wrap_pyfunction!(enumerate_cost, m)?)?;
    m.add_function(wrap_pyfunction!(cost_via_beliefs, m)?)?;
    m.add_function(wrap_pyfunction!(initial_posterior, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_posterior, m)?)?;
    m.add_function(wrap_pyfunction!(solve_best_response, m)?)?;
    m.add_function(wrap_pyfunction!(brute_force_best_response, m)?)?;
    m.add_function(wrap_pyfunction!(pbp_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(verify_pbp, m)?)?;
    m.add_function(wrap_pyfunction!(check_conditional_independence, m)?)?;
    m.add_function(wrap_pyfunction!(check_policy_independence, m)?)?;
    m.add_function(wrap_pyfunction!(check_conditional_markov, m)?)?;
    m.add_function(wrap_pyfunction!(check_k1_reduction, m)?)?;
    m.add_function(wrap_pyfunction!(check_payoff_identity, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add("TOL_COMPARE", delayshare::TOL_COMPARE)?;
    m.add("TOL_IMPROVE", delayshare::TOL_IMPROVE)?;
    Ok(())
}
