//! The UCB expert-selection loop and comparison selectors.
//!
//! A run threads one MDP state through all rounds: each episode starts where
//! the previous expert left the system. Random draws come from one stream in
//! a fixed order: the initial-state draw, then per round any selector draws,
//! then for each step one observation draw followed by one transition draw.

use std::fmt;
use std::str::FromStr;

use crate::error::{check_index, Error, Result};
use crate::experts::{act, argmax_lowest, ExpertSet, Policy};
use crate::mdp::{observe, step, Mdp, ObservationKernel, RngStream};

/// `T_n = ⌈T0 + c·n⌉`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpisodeSchedule {
    t0: u64,
    growth: f64,
}

impl EpisodeSchedule {
    pub fn new(t0: u64, growth: f64) -> Result<Self> {
        if t0 < 1 {
            return Err(Error::InvalidParameter("t0 must be ≥ 1".into()));
        }
        if !(growth >= 0.0 && growth.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "growth c must be a finite value ≥ 0, got {growth}"
            )));
        }
        Ok(Self { t0, growth })
    }

    pub fn t0(&self) -> u64 {
        self.t0
    }

    pub fn growth(&self) -> f64 {
        self.growth
    }

    /// Episode length of round `n`. Values within 1e-9 of an integer are
    /// treated as that integer, so `c = 0.1` at `n = 30` gives `T0 + 3`.
    pub fn length(&self, n: u64) -> u64 {
        let x = self.t0 as f64 + self.growth * n as f64;
        let nearest = x.round();
        if (x - nearest).abs() <= 1e-9 * nearest.max(1.0) {
            nearest as u64
        } else {
            x.ceil() as u64
        }
    }

    /// `t_n = Σ_{k<n} T_k`.
    pub fn elapsed_before(&self, n: u64) -> u64 {
        (0..n).map(|k| self.length(k)).sum()
    }
}

/// Free-function form of [`EpisodeSchedule::length`].
pub fn episode_length(schedule: &EpisodeSchedule, n: u64) -> u64 {
    schedule.length(n)
}

/// Confidence level used for the radii.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DeltaSchedule {
    Fixed(f64),
    /// `δ(n) = n^(-alpha)`, with `n` clamped to at least 2.
    Polynomial { alpha: f64 },
}

impl Default for DeltaSchedule {
    fn default() -> Self {
        DeltaSchedule::Polynomial { alpha: 4.0 }
    }
}

impl DeltaSchedule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            DeltaSchedule::Fixed(d) if !(d > 0.0 && d < 1.0) => Err(Error::InvalidParameter(
                format!("fixed delta must lie in (0,1), got {d}"),
            )),
            DeltaSchedule::Polynomial { alpha } if !(alpha > 0.0 && alpha.is_finite()) => Err(
                Error::InvalidParameter(format!("delta exponent alpha must be > 0, got {alpha}")),
            ),
            _ => Ok(()),
        }
    }

    pub fn is_round_dependent(&self) -> bool {
        matches!(self, DeltaSchedule::Polynomial { .. })
    }

    pub fn delta(&self, n: u64) -> f64 {
        match *self {
            DeltaSchedule::Fixed(d) => d,
            DeltaSchedule::Polynomial { alpha } => (n.max(2) as f64).powf(-alpha),
        }
    }

    /// `log(1/δ(n))`, evaluated without forming `δ` for the polynomial case.
    pub fn log_inv(&self, n: u64) -> f64 {
        match *self {
            DeltaSchedule::Fixed(d) => -d.ln(),
            DeltaSchedule::Polynomial { alpha } => alpha * (n.max(2) as f64).ln(),
        }
    }
}

fn radius_from_log(pulls: u64, log_inv: f64) -> f64 {
    if pulls == 0 {
        f64::INFINITY
    } else {
        (2.0 / pulls as f64 * log_inv).sqrt()
    }
}

/// `c_i = sqrt((2 / n_i) log(1/δ))`, infinite for an untried expert.
pub fn confidence_radius(pulls: u64, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter(format!("delta must lie in (0,1), got {delta}")));
    }
    Ok(radius_from_log(pulls, -delta.ln()))
}

/// How ties in the UCB index are resolved.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TieBreak {
    #[default]
    Lowest,
    /// Uniform among tied experts, from a dedicated stream with this seed.
    Random(u64),
}

/// Controller bookkeeping.
#[derive(Clone, Debug, PartialEq)]
pub struct UcbState {
    pub counts: Vec<u64>,
    pub sums: Vec<f64>,
    pub means: Vec<f64>,
    pub radii: Vec<f64>,
    /// Completed rounds.
    pub round: u64,
    /// Completed MDP steps.
    pub step: u64,
    pub mdp_state: usize,
}

impl UcbState {
    pub fn new(num_experts: usize, mdp_state: usize) -> Self {
        Self {
            counts: vec![0; num_experts],
            sums: vec![0.0; num_experts],
            means: vec![0.0; num_experts],
            radii: vec![f64::INFINITY; num_experts],
            round: 0,
            step: 0,
            mdp_state,
        }
    }

    pub fn num_experts(&self) -> usize {
        self.counts.len()
    }

    /// `R_i + c_i` per expert (`+∞` for untried experts).
    pub fn indices(&self) -> Vec<f64> {
        self.means
            .iter()
            .zip(&self.radii)
            .zip(&self.counts)
            .map(|((r, c), &n)| if n == 0 { f64::INFINITY } else { r + c })
            .collect()
    }
}

/// `argmax_i R_i + c_i`, lowest index on ties.
pub fn select_expert(state: &UcbState) -> usize {
    argmax_lowest(&state.indices())
}

fn select_with(state: &UcbState, tie: &mut Option<RngStream>) -> usize {
    let indices = state.indices();
    match tie {
        None => argmax_lowest(&indices),
        Some(rng) => {
            let best = indices[argmax_lowest(&indices)];
            let tied: Vec<usize> = (0..indices.len()).filter(|&i| indices[i] == best).collect();
            tied[rng.index(tied.len())]
        }
    }
}

/// Records one episode for expert `e` and refreshes the radii with
/// `δ = delta_now`.
///
/// Only the pulled expert's radius changes under a fixed `δ`; pass
/// `refresh_all` to recompute every tried expert's radius, as done for
/// round-dependent schedules.
pub fn update(state: &mut UcbState, e: usize, avg_reward: f64, delta_now: f64, refresh_all: bool) -> Result<()> {
    check_index("expert", e, state.num_experts())?;
    if !(0.0..=1.0).contains(&avg_reward) {
        return Err(Error::InvalidParameter(format!(
            "episode average {avg_reward} outside [0,1]"
        )));
    }
    if !(delta_now > 0.0 && delta_now < 1.0) {
        return Err(Error::InvalidParameter(format!("delta must lie in (0,1), got {delta_now}")));
    }
    record(state, e, avg_reward);
    let log_inv = -delta_now.ln();
    refresh(state, e, log_inv, refresh_all);
    Ok(())
}

fn record(state: &mut UcbState, e: usize, avg_reward: f64) {
    state.sums[e] += avg_reward;
    state.counts[e] += 1;
    state.means[e] = state.sums[e] / state.counts[e] as f64;
}

fn refresh(state: &mut UcbState, e: usize, log_inv: f64, all: bool) {
    if all {
        for i in 0..state.num_experts() {
            state.radii[i] = radius_from_log(state.counts[i], log_inv);
        }
    } else {
        state.radii[e] = radius_from_log(state.counts[e], log_inv);
    }
}

/// Runs `length` steps of observe → act → step from `start` and returns the
/// average reward together with the final state.
pub fn run_episode(
    mdp: &Mdp,
    kernel: &ObservationKernel,
    policy: &Policy,
    length: u64,
    start: usize,
    rng: &mut RngStream,
) -> Result<(f64, usize)> {
    if length == 0 {
        return Err(Error::InvalidParameter("episode length must be ≥ 1".into()));
    }
    let mut state = start;
    let mut total = 0.0;
    for _ in 0..length {
        let y = observe(kernel, state, rng)?;
        let a = act(policy, y)?;
        let (next, r) = step(mdp, state, a, rng)?;
        total += r;
        state = next;
    }
    Ok(((total / length as f64).clamp(0.0, 1.0), state))
}

/// Which expert to run each round.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Selector {
    Ucb,
    /// Always the given (best) expert.
    Oracle(usize),
    Uniform,
    Fixed(usize),
    /// After one pull of every expert, explore uniformly with probability
    /// `ε`, otherwise pull the best running mean.
    EpsilonGreedy(f64),
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Selector::Ucb => write!(f, "ucb"),
            Selector::Oracle(e) => write!(f, "oracle({e})"),
            Selector::Uniform => write!(f, "uniform"),
            Selector::Fixed(e) => write!(f, "fixed({e})"),
            Selector::EpsilonGreedy(eps) => write!(f, "epsilon_greedy({eps})"),
        }
    }
}

/// Everything a run needs besides the experts and the random stream.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunConfig {
    pub schedule: EpisodeSchedule,
    pub deltas: DeltaSchedule,
    pub rounds: u64,
    pub tie_break: TieBreak,
}

/// One completed round.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundRecord {
    pub round: u64,
    pub expert: usize,
    pub episode_length: u64,
    pub episode_avg_reward: f64,
    pub means: Vec<f64>,
    pub radii: Vec<f64>,
    pub counts: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunTrace {
    pub num_experts: usize,
    pub initial_state: usize,
    pub records: Vec<RoundRecord>,
    pub terminal_state: usize,
    pub total_steps: u64,
}

impl RunTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn experts(&self) -> impl Iterator<Item = usize> + '_ {
        self.records.iter().map(|r| r.expert)
    }
}

/// Runs `config.rounds` rounds with the given selector.
pub fn run_controller(
    mdp: &Mdp,
    kernel: &ObservationKernel,
    experts: &ExpertSet,
    config: &RunConfig,
    selector: Selector,
    rng: &mut RngStream,
) -> Result<RunTrace> {
    config.deltas.validate()?;
    let k = experts.len();
    match selector {
        Selector::Oracle(e) | Selector::Fixed(e) => check_index("expert", e, k)?,
        Selector::EpsilonGreedy(eps) if !(0.0..=1.0).contains(&eps) => {
            return Err(Error::InvalidParameter(format!("epsilon must lie in [0,1], got {eps}")))
        }
        _ => {}
    }
    if kernel.num_states() != mdp.num_states() || kernel.num_observations() != experts.num_observations() {
        return Err(Error::Dimension("kernel, MDP and experts disagree on state/observation counts".into()));
    }

    let initial_state = mdp.sample_initial(rng);
    let mut state = UcbState::new(k, initial_state);
    let mut tie_rng = match config.tie_break {
        TieBreak::Lowest => None,
        TieBreak::Random(seed) => Some(RngStream::new(seed)),
    };
    let refresh_all = config.deltas.is_round_dependent();
    let mut records = Vec::with_capacity(config.rounds as usize);

    for n in 0..config.rounds {
        let e = match selector {
            Selector::Ucb => select_with(&state, &mut tie_rng),
            Selector::Oracle(e) | Selector::Fixed(e) => e,
            Selector::Uniform => rng.index(k),
            Selector::EpsilonGreedy(eps) => match state.counts.iter().position(|&c| c == 0) {
                Some(untried) => untried,
                None if rng.uniform() < eps => rng.index(k),
                None => argmax_lowest(&state.means),
            },
        };
        let length = config.schedule.length(n);
        let (avg, last) = run_episode(mdp, kernel, experts.get(e), length, state.mdp_state, rng)?;
        record(&mut state, e, avg);
        state.round = n + 1;
        state.step += length;
        state.mdp_state = last;
        let log_inv = config.deltas.log_inv(state.round);
        refresh(&mut state, e, log_inv, refresh_all);
        records.push(RoundRecord {
            round: n,
            expert: e,
            episode_length: length,
            episode_avg_reward: avg,
            means: state.means.clone(),
            radii: state.radii.clone(),
            counts: state.counts.clone(),
        });
    }

    Ok(RunTrace {
        num_experts: k,
        initial_state,
        records,
        terminal_state: state.mdp_state,
        total_steps: state.step,
    })
}

/// UCB over experts. Requires at least one round per expert.
pub fn run_ucb(
    mdp: &Mdp,
    kernel: &ObservationKernel,
    experts: &ExpertSet,
    config: &RunConfig,
    rng: &mut RngStream,
) -> Result<RunTrace> {
    if (config.rounds as usize) < experts.len() {
        return Err(Error::InvalidParameter(format!(
            "{} rounds cannot try each of {} experts",
            config.rounds,
            experts.len()
        )));
    }
    run_controller(mdp, kernel, experts, config, Selector::Ucb, rng)
}

/// Comparison run with a non-UCB selector.
pub fn run_baseline(
    selector: Selector,
    mdp: &Mdp,
    kernel: &ObservationKernel,
    experts: &ExpertSet,
    config: &RunConfig,
    rng: &mut RngStream,
) -> Result<RunTrace> {
    run_controller(mdp, kernel, experts, config, selector, rng)
}

/// Parses `ucb`, `uniform`, `fixed(E)`, `epsilon_greedy(EPS)`; `oracle`
/// needs the best expert and parses to [`SelectorSpec::Oracle`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SelectorSpec {
    Ucb,
    Oracle,
    Uniform,
    Fixed(usize),
    EpsilonGreedy(f64),
}

impl SelectorSpec {
    pub fn resolve(self, best: Option<usize>) -> Result<Selector> {
        Ok(match self {
            SelectorSpec::Ucb => Selector::Ucb,
            SelectorSpec::Oracle => Selector::Oracle(best.ok_or_else(|| {
                Error::InvalidParameter("oracle selector needs a best expert, but chain analysis failed".into())
            })?),
            SelectorSpec::Uniform => Selector::Uniform,
            SelectorSpec::Fixed(e) => Selector::Fixed(e),
            SelectorSpec::EpsilonGreedy(eps) => Selector::EpsilonGreedy(eps),
        })
    }
}

impl fmt::Display for SelectorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SelectorSpec::Ucb => write!(f, "ucb"),
            SelectorSpec::Oracle => write!(f, "oracle"),
            SelectorSpec::Uniform => write!(f, "uniform"),
            SelectorSpec::Fixed(e) => write!(f, "fixed({e})"),
            SelectorSpec::EpsilonGreedy(eps) => write!(f, "epsilon_greedy({eps})"),
        }
    }
}

impl FromStr for SelectorSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let arg = |prefix: &str| {
            s.strip_prefix(prefix)
                .and_then(|rest| rest.strip_prefix('('))
                .and_then(|rest| rest.strip_suffix(')'))
                .map(str::trim)
        };
        let bad = || Error::Config(format!(
            "unknown selector '{s}' (expected ucb, oracle, uniform, fixed(E) or epsilon_greedy(EPS))"
        ));
        match s {
            "ucb" => Ok(SelectorSpec::Ucb),
            "oracle" => Ok(SelectorSpec::Oracle),
            "uniform" => Ok(SelectorSpec::Uniform),
            _ => {
                if let Some(e) = arg("fixed") {
                    e.parse().map(SelectorSpec::Fixed).map_err(|_| bad())
                } else if let Some(eps) = arg("epsilon_greedy") {
                    let eps: f64 = eps.parse().map_err(|_| bad())?;
                    if !(0.0..=1.0).contains(&eps) {
                        return Err(Error::Config(format!("epsilon_greedy epsilon must lie in [0,1], got {eps}")));
                    }
                    Ok(SelectorSpec::EpsilonGreedy(eps))
                } else {
                    Err(bad())
                }
            }
        }
    }
}
