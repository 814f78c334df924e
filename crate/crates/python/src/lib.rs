//! Python bindings for `ucb_experts`.

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use ucb_experts::chain::{self, InducedChain};
use ucb_experts::config::{load_config, ExperimentConfig};
use ucb_experts::controller::EpisodeSchedule;
use ucb_experts::gridworld::{build_gridworld, GridDynamicsParams, GridLayout};
use ucb_experts::harness::{self, analysis_table};
use ucb_experts::mdp::{self, RngStream};
use ucb_experts::regret::{self, BoundInputs};
use ucb_experts::Error;

fn to_py(err: Error) -> PyErr {
    match err {
        Error::Io(e) => PyIOError::new_err(e.to_string()),
        Error::InvalidModel(_) | Error::NotErgodic(_) | Error::NoConvergence { .. } => {
            PyRuntimeError::new_err(err.to_string())
        }
        _ => PyValueError::new_err(err.to_string()),
    }
}

/// Seeded random stream shared by `Mdp.step` calls.
#[pyclass(module = "ucb_experts")]
struct Rng(RngStream);

#[pymethods]
impl Rng {
    #[new]
    fn new(seed: u64) -> Self {
        Rng(RngStream::new(seed))
    }

    fn uniform(&mut self) -> f64 {
        self.0.uniform()
    }
}

/// Finite MDP over flat `[action][state][next]` tables.
#[pyclass(module = "ucb_experts", skip_from_py_object)]
#[derive(Clone)]
struct Mdp(mdp::Mdp);

#[pymethods]
impl Mdp {
    #[new]
    fn new(
        num_states: usize,
        num_actions: usize,
        transitions: Vec<f64>,
        rewards: Vec<f64>,
        discount: f64,
        initial: Vec<f64>,
    ) -> PyResult<Self> {
        mdp::Mdp::new(num_states, num_actions, transitions, rewards, discount, initial)
            .map(Mdp)
            .map_err(to_py)
    }

    #[getter]
    fn num_states(&self) -> usize {
        self.0.num_states()
    }

    #[getter]
    fn num_actions(&self) -> usize {
        self.0.num_actions()
    }

    fn prob(&self, state: usize, action: usize, next: usize) -> f64 {
        self.0.prob(state, action, next)
    }

    /// Samples `(next_state, reward)`.
    fn step(&self, state: usize, action: usize, rng: &mut Rng) -> PyResult<(usize, f64)> {
        mdp::step(&self.0, state, action, &mut rng.0).map_err(to_py)
    }
}

/// Gridworld MDP from layout rows (the default grid when omitted).
#[pyfunction]
#[pyo3(signature = (rows=None, p_intended=0.97, p_trap_escape=0.02, discount=0.95))]
fn gridworld(rows: Option<Vec<String>>, p_intended: f64, p_trap_escape: f64, discount: f64) -> PyResult<Mdp> {
    let layout = match rows {
        Some(rows) => GridLayout::from_rows(&rows).map_err(to_py)?,
        None => GridLayout::default_layout(),
    };
    let params = GridDynamicsParams {
        p_intended,
        p_trap_escape,
    };
    build_gridworld(&layout, params, discount).map(Mdp).map_err(to_py)
}

#[pyclass(module = "ucb_experts", get_all)]
struct ChainStats {
    stationary: Vec<f64>,
    steady_state_reward: f64,
    bias_constant: f64,
    second_eigenvalue_modulus: f64,
}

/// Stationary distribution, steady-state reward and bias constant of an
/// ergodic chain given as a row-stochastic matrix and per-state rewards.
#[pyfunction]
fn analyze_chain(transition: Vec<Vec<f64>>, reward: Vec<f64>) -> PyResult<ChainStats> {
    let n = transition.len();
    if transition.iter().any(|row| row.len() != n) {
        return Err(PyValueError::new_err("transition must be square"));
    }
    let chain = InducedChain::new(n, transition.concat(), reward).map_err(to_py)?;
    let report = chain::check_ergodic(&chain);
    if !report.is_ergodic() {
        return Err(PyRuntimeError::new_err(format!("chain is not ergodic: {report}")));
    }
    let stats = chain::analyze_chain(&chain).map_err(to_py)?;
    Ok(ChainStats {
        stationary: stats.stationary,
        steady_state_reward: stats.steady_state_reward,
        bias_constant: stats.bias_constant,
        second_eigenvalue_modulus: stats.second_eigenvalue_modulus,
    })
}

/// Regret bound after `n` rounds, or `None` when its precondition fails.
#[pyfunction]
#[pyo3(signature = (n, gaps, bias_constants, best, t0, growth=0.1))]
fn theoretical_bound(
    n: u64,
    gaps: Vec<f64>,
    bias_constants: Vec<f64>,
    best: usize,
    t0: u64,
    growth: f64,
) -> PyResult<Option<f64>> {
    if gaps.len() != bias_constants.len() || best >= gaps.len() {
        return Err(PyValueError::new_err("gaps and bias_constants must match and contain best"));
    }
    let schedule = EpisodeSchedule::new(t0, growth).map_err(to_py)?;
    let inputs = BoundInputs {
        gaps,
        bias_constants,
        best,
    };
    Ok(regret::theoretical_bound(n, &inputs, &schedule).value())
}

/// Length of episode `n` (0-based), `⌈T0 + growth·n⌉`.
#[pyfunction]
fn episode_length(t0: u64, growth: f64, n: u64) -> PyResult<u64> {
    Ok(EpisodeSchedule::new(t0, growth).map_err(to_py)?.length(n))
}

/// Experiment configuration; defaults match `ucb-experts print-default-config`.
#[pyclass(module = "ucb_experts", skip_from_py_object)]
#[derive(Clone)]
struct Config(ExperimentConfig);

#[pymethods]
impl Config {
    #[new]
    fn new() -> Self {
        Config(ExperimentConfig::default())
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        ExperimentConfig::parse(text).map(Config).map_err(to_py)
    }

    #[staticmethod]
    fn load(path: std::path::PathBuf) -> PyResult<Self> {
        load_config(path).map(Config).map_err(to_py)
    }

    fn to_toml(&self) -> String {
        self.0.to_toml()
    }

    fn validate(&self) -> PyResult<()> {
        self.0.validate().map_err(to_py)
    }

    #[getter]
    fn t0(&self) -> u64 {
        self.0.schedule.t0
    }

    #[setter]
    fn set_t0(&mut self, v: u64) {
        self.0.schedule.t0 = v;
    }

    #[getter]
    fn growth(&self) -> f64 {
        self.0.schedule.growth
    }

    #[setter]
    fn set_growth(&mut self, v: f64) {
        self.0.schedule.growth = v;
    }

    #[getter]
    fn rounds(&self) -> u64 {
        self.0.run.rounds
    }

    #[setter]
    fn set_rounds(&mut self, v: u64) {
        self.0.run.rounds = v;
    }

    #[getter]
    fn repetitions(&self) -> usize {
        self.0.run.repetitions
    }

    #[setter]
    fn set_repetitions(&mut self, v: usize) {
        self.0.run.repetitions = v;
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.0.run.base_seed
    }

    #[setter]
    fn set_seed(&mut self, v: u64) {
        self.0.run.base_seed = v;
    }

    #[getter]
    fn selector(&self) -> String {
        self.0.run.selector.clone()
    }

    #[setter]
    fn set_selector(&mut self, v: String) {
        self.0.run.selector = v;
    }

    fn __repr__(&self) -> String {
        format!(
            "Config(t0={}, growth={}, rounds={}, repetitions={}, seed={}, selector={:?})",
            self.0.schedule.t0,
            self.0.schedule.growth,
            self.0.run.rounds,
            self.0.run.repetitions,
            self.0.run.base_seed,
            self.0.run.selector
        )
    }
}

/// Gridworld, trained experts and their chain analysis.
#[pyclass(module = "ucb_experts")]
struct Scenario {
    inner: harness::Scenario,
    config: ExperimentConfig,
}

impl Scenario {
    fn gaps(&self) -> PyResult<&chain::GapReport> {
        self.inner.require_gaps().map_err(to_py)
    }
}

#[pymethods]
impl Scenario {
    #[new]
    fn new(py: Python<'_>, config: &Config) -> PyResult<Self> {
        let config = config.0.clone();
        let inner = py.detach(|| harness::build_scenario(&config)).map_err(to_py)?;
        Ok(Scenario { inner, config })
    }

    #[getter]
    fn num_experts(&self) -> usize {
        self.inner.experts.len()
    }

    #[getter]
    fn mdp(&self) -> Mdp {
        Mdp(self.inner.mdp.clone())
    }

    #[getter]
    fn best(&self) -> PyResult<usize> {
        Ok(self.gaps()?.best)
    }

    #[getter]
    fn steady_state_rewards(&self) -> PyResult<Vec<f64>> {
        let g = self.gaps()?;
        Ok(g.gaps.iter().map(|d| g.best_reward - d).collect())
    }

    #[getter]
    fn bias_constants(&self) -> PyResult<Vec<f64>> {
        Ok(self.gaps()?.bias_constants.clone())
    }

    #[getter]
    fn gap_values(&self) -> PyResult<Vec<f64>> {
        Ok(self.gaps()?.gaps.clone())
    }

    #[getter]
    fn min_valid_t0(&self) -> PyResult<Option<u64>> {
        Ok(self.gaps()?.min_valid_t0())
    }

    /// Expert actions indexed by observation.
    fn policy(&self, expert: usize) -> PyResult<Vec<usize>> {
        if expert >= self.inner.experts.len() {
            return Err(PyValueError::new_err(format!("no expert {expert}")));
        }
        Ok(self.inner.experts.get(expert).actions().to_vec())
    }

    /// The analysis table as CSV for the given `T0` values.
    #[pyo3(signature = (t0s=None))]
    fn analysis_csv(&self, t0s: Option<Vec<u64>>) -> String {
        let t0s = t0s.unwrap_or_else(|| harness::configured_t0s(&self.config));
        analysis_table(&self.inner, &self.config, &t0s).to_csv()
    }
}

/// Aggregated outcome of one experiment.
#[pyclass(module = "ucb_experts", get_all)]
struct RunResult {
    t0: u64,
    best: usize,
    best_reward: f64,
    mean_regret: Vec<f64>,
    sd_regret: Vec<f64>,
    mean_avg_cum_reward: Vec<f64>,
    sd_avg_cum_reward: Vec<f64>,
    mean_fractions: Vec<Vec<f64>>,
    /// Chosen expert per round, one list per repetition.
    chosen: Vec<Vec<usize>>,
    bound: Option<f64>,
    /// `(a, b, r_squared)` of `regret ≈ a ln n + b` over the second half.
    fit: Option<(f64, f64, f64)>,
}

/// Runs the configured selector on every repetition at `t0` (the
/// configured `T0` when omitted).
#[pyfunction]
#[pyo3(signature = (config, t0=None))]
fn run_experiment(py: Python<'_>, config: &Config, t0: Option<u64>) -> PyResult<RunResult> {
    let mut config = config.0.clone();
    if let Some(t0) = t0 {
        config.schedule.t0 = t0;
    }
    let (_, exp) = py.detach(|| harness::run_experiment(&config)).map_err(to_py)?;
    let agg = exp.aggregate;
    Ok(RunResult {
        t0: agg.t0,
        best: agg.best,
        best_reward: agg.best_reward,
        chosen: exp.traces.iter().map(|t| t.experts().collect()).collect(),
        bound: agg.bound.value(),
        fit: agg.fit.map(|f| (f.a, f.b, f.r_squared)),
        mean_regret: agg.mean_regret,
        sd_regret: agg.sd_regret,
        mean_avg_cum_reward: agg.mean_avg_cum_reward,
        sd_avg_cum_reward: agg.sd_avg_cum_reward,
        mean_fractions: agg.mean_fractions,
    })
}

#[pymodule(name = "ucb_experts")]
fn ucb_experts_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Rng>()?;
    m.add_class::<Mdp>()?;
    m.add_class::<ChainStats>()?;
    m.add_class::<Config>()?;
    m.add_class::<Scenario>()?;
    m.add_class::<RunResult>()?;
    m.add_function(wrap_pyfunction!(gridworld, m)?)?;
    m.add_function(wrap_pyfunction!(analyze_chain, m)?)?;
    m.add_function(wrap_pyfunction!(theoretical_bound, m)?)?;
    m.add_function(wrap_pyfunction!(episode_length, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
