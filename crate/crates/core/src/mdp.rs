//! Finite tabular MDPs, observation kernels and the seeded random stream
//! that drives every simulation.
//!
//! Matrices are stored dense and row-major. Transition entries are indexed
//! `[action][state][next_state]`; the reward table uses the same layout so
//! `r(s, a, s')` sits next to `Pr(s' | s, a)`.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_index, Error, Result};

/// Tolerance on row sums and initial-distribution mass.
pub const PROB_TOL: f64 = 1e-12;

/// A finite MDP with expected rewards `r(s, a, s')` in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Mdp {
    num_states: usize,
    num_actions: usize,
    transitions: Vec<f64>,
    rewards: Vec<f64>,
    discount: f64,
    initial: Vec<f64>,
}

impl Mdp {
    /// Assembles an MDP from flat `[a][s][s']` tables.
    ///
    /// Only shapes are checked here; use [`validate_mdp`] (or [`Mdp::new`])
    /// for the probabilistic invariants.
    pub fn from_parts(
        num_states: usize,
        num_actions: usize,
        transitions: Vec<f64>,
        rewards: Vec<f64>,
        discount: f64,
        initial: Vec<f64>,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return Err(Error::Dimension(
                "an MDP needs at least one state and one action".into(),
            ));
        }
        let cells = num_actions * num_states * num_states;
        if transitions.len() != cells {
            return Err(Error::Dimension(format!(
                "transition table has {} entries, expected {cells}",
                transitions.len()
            )));
        }
        if rewards.len() != cells {
            return Err(Error::Dimension(format!(
                "reward table has {} entries, expected {cells}",
                rewards.len()
            )));
        }
        if initial.len() != num_states {
            return Err(Error::Dimension(format!(
                "initial distribution has {} entries, expected {num_states}",
                initial.len()
            )));
        }
        Ok(Self {
            num_states,
            num_actions,
            transitions,
            rewards,
            discount,
            initial,
        })
    }

    /// Like [`Mdp::from_parts`] but rejects any invariant violation.
    pub fn new(
        num_states: usize,
        num_actions: usize,
        transitions: Vec<f64>,
        rewards: Vec<f64>,
        discount: f64,
        initial: Vec<f64>,
    ) -> Result<Self> {
        let mdp = Self::from_parts(
            num_states,
            num_actions,
            transitions,
            rewards,
            discount,
            initial,
        )?;
        let report = validate_mdp(&mdp);
        if report.is_valid() {
            Ok(mdp)
        } else {
            Err(Error::InvalidModel(report.to_string()))
        }
    }

    /// Builds from nested `[action][state][next]` matrices.
    pub fn from_matrices(
        transitions: &[Vec<Vec<f64>>],
        rewards: &[Vec<Vec<f64>>],
        discount: f64,
        initial: Vec<f64>,
    ) -> Result<Self> {
        let num_actions = transitions.len();
        let num_states = initial.len();
        let flatten = |m: &[Vec<Vec<f64>>], name: &str| -> Result<Vec<f64>> {
            let mut out = Vec::with_capacity(num_actions * num_states * num_states);
            if m.len() != num_actions {
                return Err(Error::Dimension(format!("{name}: wrong action count")));
            }
            for rows in m {
                if rows.len() != num_states {
                    return Err(Error::Dimension(format!("{name}: wrong row count")));
                }
                for row in rows {
                    if row.len() != num_states {
                        return Err(Error::Dimension(format!("{name}: wrong row length")));
                    }
                    out.extend_from_slice(row);
                }
            }
            Ok(out)
        };
        let t = flatten(transitions, "transitions")?;
        let r = flatten(rewards, "rewards")?;
        Self::from_parts(num_states, num_actions, t, r, discount, initial)
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn initial_dist(&self) -> &[f64] {
        &self.initial
    }

    fn offset(&self, action: usize, state: usize) -> usize {
        (action * self.num_states + state) * self.num_states
    }

    /// `Pr(· | state, action)`.
    pub fn transition_row(&self, state: usize, action: usize) -> &[f64] {
        let o = self.offset(action, state);
        &self.transitions[o..o + self.num_states]
    }

    /// `r(state, action, ·)`.
    pub fn reward_row(&self, state: usize, action: usize) -> &[f64] {
        let o = self.offset(action, state);
        &self.rewards[o..o + self.num_states]
    }

    pub fn prob(&self, state: usize, action: usize, next: usize) -> f64 {
        self.transition_row(state, action)[next]
    }

    pub fn reward(&self, state: usize, action: usize, next: usize) -> f64 {
        self.reward_row(state, action)[next]
    }

    /// Expected one-step reward `Σ_s' Pr(s'|s,a) r(s,a,s')`.
    pub fn expected_reward(&self, state: usize, action: usize) -> f64 {
        self.transition_row(state, action)
            .iter()
            .zip(self.reward_row(state, action))
            .map(|(p, r)| p * r)
            .sum()
    }

    pub(crate) fn transitions_raw(&self) -> &[f64] {
        &self.transitions
    }

    pub(crate) fn rewards_raw(&self) -> &[f64] {
        &self.rewards
    }

    pub fn with_discount(mut self, discount: f64) -> Self {
        self.discount = discount;
        self
    }

    /// Samples `s0 ~ μ0`.
    pub fn sample_initial(&self, rng: &mut RngStream) -> usize {
        sample_index(&self.initial, rng.uniform())
    }
}

/// One violated invariant.
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    RowSum { action: usize, state: usize, sum: f64 },
    NegativeProbability { action: usize, state: usize, next: usize, value: f64 },
    RewardOutOfRange { action: usize, state: usize, next: usize, value: f64 },
    InitialSum { sum: f64 },
    NegativeInitial { state: usize, value: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Violation::RowSum { action, state, sum } => {
                write!(f, "row sum {sum} at (a={action}, s={state})")
            }
            Violation::NegativeProbability { action, state, next, value } => write!(
                f,
                "negative probability {value} at (a={action}, s={state}, s'={next})"
            ),
            Violation::RewardOutOfRange { action, state, next, value } => write!(
                f,
                "reward out of [0,1]: {value} at (a={action}, s={state}, s'={next})"
            ),
            Violation::InitialSum { sum } => write!(f, "initial distribution sums to {sum}"),
            Violation::NegativeInitial { state, value } => {
                write!(f, "negative initial probability {value} at s={state}")
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "valid");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Checks every row, reward entry and the initial distribution.
pub fn validate_mdp(mdp: &Mdp) -> ValidationReport {
    let mut violations = Vec::new();
    for a in 0..mdp.num_actions {
        for s in 0..mdp.num_states {
            let row = mdp.transition_row(s, a);
            for (next, &p) in row.iter().enumerate() {
                if p < 0.0 || !p.is_finite() {
                    violations.push(Violation::NegativeProbability {
                        action: a,
                        state: s,
                        next,
                        value: p,
                    });
                }
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > PROB_TOL || !sum.is_finite() {
                violations.push(Violation::RowSum { action: a, state: s, sum });
            }
            for (next, &r) in mdp.reward_row(s, a).iter().enumerate() {
                if !(0.0..=1.0).contains(&r) {
                    violations.push(Violation::RewardOutOfRange {
                        action: a,
                        state: s,
                        next,
                        value: r,
                    });
                }
            }
        }
    }
    for (state, &p) in mdp.initial.iter().enumerate() {
        if p < 0.0 || !p.is_finite() {
            violations.push(Violation::NegativeInitial { state, value: p });
        }
    }
    let sum: f64 = mdp.initial.iter().sum();
    if (sum - 1.0).abs() > PROB_TOL || !sum.is_finite() {
        violations.push(Violation::InitialSum { sum });
    }
    ValidationReport { violations }
}

/// Emission probabilities `Pr(y | s)`, one row per state.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationKernel {
    num_states: usize,
    num_observations: usize,
    emission: Vec<f64>,
}

impl ObservationKernel {
    pub fn new(num_states: usize, num_observations: usize, emission: Vec<f64>) -> Result<Self> {
        if num_states == 0 || num_observations == 0 {
            return Err(Error::Dimension("empty observation kernel".into()));
        }
        if emission.len() != num_states * num_observations {
            return Err(Error::Dimension(format!(
                "emission table has {} entries, expected {}",
                emission.len(),
                num_states * num_observations
            )));
        }
        for s in 0..num_states {
            let row = &emission[s * num_observations..(s + 1) * num_observations];
            if row.iter().any(|&p| p < 0.0 || !p.is_finite()) {
                return Err(Error::InvalidModel(format!(
                    "negative emission probability in row {s}"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > PROB_TOL {
                return Err(Error::InvalidModel(format!(
                    "emission row {s} sums to {sum}"
                )));
            }
        }
        Ok(Self {
            num_states,
            num_observations,
            emission,
        })
    }

    /// Fully observed: `y = s`.
    pub fn identity(num_states: usize) -> Self {
        let mut emission = vec![0.0; num_states * num_states];
        for s in 0..num_states {
            emission[s * num_states + s] = 1.0;
        }
        Self {
            num_states,
            num_observations: num_states,
            emission,
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_observations(&self) -> usize {
        self.num_observations
    }

    pub fn row(&self, state: usize) -> &[f64] {
        let o = state * self.num_observations;
        &self.emission[o..o + self.num_observations]
    }
}

/// Seeded random stream. The same seed always yields the same sequence of
/// uniform variates, hence the same trajectories.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform variate in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }
}

/// Inverse-CDF draw over `weights` with cumulative sums taken in ascending
/// index order. Falls back to the last positive entry if rounding leaves
/// `u` above the final partial sum.
pub fn sample_index(weights: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last_positive = i;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

/// Samples `s' ~ Pr(· | state, action)` and returns it with `r(s, a, s')`.
pub fn step(mdp: &Mdp, state: usize, action: usize, rng: &mut RngStream) -> Result<(usize, f64)> {
    check_index("state", state, mdp.num_states)?;
    check_index("action", action, mdp.num_actions)?;
    let next = sample_index(mdp.transition_row(state, action), rng.uniform());
    Ok((next, mdp.reward(state, action, next)))
}

/// Samples an observation from the emission row of `state`.
pub fn observe(kernel: &ObservationKernel, state: usize, rng: &mut RngStream) -> Result<usize> {
    check_index("state", state, kernel.num_states)?;
    Ok(sample_index(kernel.row(state), rng.uniform()))
}
