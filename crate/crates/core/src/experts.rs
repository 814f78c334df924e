//! Expert policies: value-iteration training under believed dynamics and
//! the deterministic observation-to-action lookup used by the controller.

use std::fmt::Write as _;

use crate::error::{check_index, Error, Result};
use crate::gridworld::{permute_actions, ActionPermutation};
use crate::mdp::{Mdp, ObservationKernel};

/// Training defaults.
pub const DEFAULT_DISCOUNT: f64 = 0.95;
pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 100_000;

/// A state-action value table together with its convergence record.
#[derive(Clone, Debug, PartialEq)]
pub struct QTable {
    num_states: usize,
    num_actions: usize,
    values: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

impl QTable {
    pub fn from_values(num_states: usize, num_actions: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != num_states * num_actions {
            return Err(Error::Dimension(format!(
                "Q table has {} entries, expected {}",
                values.len(),
                num_states * num_actions
            )));
        }
        Ok(Self {
            num_states,
            num_actions,
            values,
            iterations: 0,
            residual: 0.0,
            converged: true,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn row(&self, state: usize) -> &[f64] {
        &self.values[state * self.num_actions..(state + 1) * self.num_actions]
    }

    pub fn get(&self, state: usize, action: usize) -> f64 {
        self.row(state)[action]
    }

    pub fn state_value(&self, state: usize) -> f64 {
        self.row(state).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

fn check_training_params(mdp: &Mdp, tol: f64) -> Result<()> {
    if !(0.0..1.0).contains(&mdp.discount()) {
        return Err(Error::InvalidParameter(format!(
            "value iteration needs a discount in [0,1), got {}",
            mdp.discount()
        )));
    }
    if tol <= 0.0 || tol.is_nan() {
        return Err(Error::InvalidParameter(format!("tolerance must be positive, got {tol}")));
    }
    Ok(())
}

fn backup(mdp: &Mdp, values: &[f64], state: usize, action: usize) -> f64 {
    let gamma = mdp.discount();
    mdp.transition_row(state, action)
        .iter()
        .zip(mdp.reward_row(state, action))
        .zip(values)
        .map(|((p, r), v)| p * (r + gamma * v))
        .sum()
}

/// Bellman optimality iteration from `Q = 0` until the sup-norm change of a
/// sweep is at most `tol`. Running out of iterations is recorded in the
/// returned table, not raised.
pub fn value_iteration(mdp: &Mdp, tol: f64, max_iter: usize) -> Result<QTable> {
    check_training_params(mdp, tol)?;
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    let mut q = vec![0.0; ns * na];
    let mut v = vec![0.0; ns];
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        residual = 0.0;
        let mut next = vec![0.0; ns * na];
        for s in 0..ns {
            for a in 0..na {
                let value = backup(mdp, &v, s, a);
                residual = f64::max(residual, (value - q[s * na + a]).abs());
                next[s * na + a] = value;
            }
        }
        q = next;
        for (s, vs) in v.iter_mut().enumerate() {
            *vs = q[s * na..(s + 1) * na].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        }
        if residual <= tol {
            break;
        }
    }
    Ok(QTable {
        num_states: ns,
        num_actions: na,
        values: q,
        iterations,
        residual,
        converged: residual <= tol,
    })
}

/// Value iteration for a policy that acts on corrupted observations.
///
/// The continuation value of `s'` is the kernel-weighted value of the action
/// the current greedy observation policy picks, `Σ_y Pr(y|s') Q(s', π(y))`,
/// where `π(y)` maximises `Σ_s Pr(y|s) Q(s, ·)`. With the identity kernel this
/// is ordinary value iteration.
pub fn noisy_value_iteration(
    mdp: &Mdp,
    kernel: &ObservationKernel,
    tol: f64,
    max_iter: usize,
) -> Result<(QTable, Policy)> {
    check_training_params(mdp, tol)?;
    if kernel.num_states() != mdp.num_states() {
        return Err(Error::Dimension(format!(
            "kernel covers {} states, MDP has {}",
            kernel.num_states(),
            mdp.num_states()
        )));
    }
    let (ns, na, ny) = (mdp.num_states(), mdp.num_actions(), kernel.num_observations());
    let mut q = QTable {
        num_states: ns,
        num_actions: na,
        values: vec![0.0; ns * na],
        iterations: 0,
        residual: f64::INFINITY,
        converged: false,
    };
    let mut policy = observation_greedy(&q, kernel);
    while q.iterations < max_iter {
        let v: Vec<f64> = (0..ns)
            .map(|s| {
                kernel
                    .row(s)
                    .iter()
                    .enumerate()
                    .map(|(y, &w)| w * q.get(s, policy[y]))
                    .sum()
            })
            .collect();
        let mut residual: f64 = 0.0;
        let mut next = vec![0.0; ns * na];
        for s in 0..ns {
            for a in 0..na {
                let value = backup(mdp, &v, s, a);
                residual = residual.max((value - q.get(s, a)).abs());
                next[s * na + a] = value;
            }
        }
        q.values = next;
        q.iterations += 1;
        q.residual = residual;
        policy = observation_greedy(&q, kernel);
        if residual <= tol {
            q.converged = true;
            break;
        }
    }
    let policy = Policy::new(policy, na)?.with_name(String::new());
    debug_assert_eq!(policy.num_observations(), ny);
    Ok((q, policy))
}

fn observation_greedy(q: &QTable, kernel: &ObservationKernel) -> Vec<usize> {
    let (ns, na) = (q.num_states, q.num_actions);
    (0..kernel.num_observations())
        .map(|y| {
            let scores: Vec<f64> = (0..na)
                .map(|a| (0..ns).map(|s| kernel.row(s)[y] * q.get(s, a)).sum())
                .collect();
            argmax_lowest(&scores)
        })
        .collect()
}

/// Index of the maximum, lowest index on ties.
pub fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Deterministic observation-to-action map.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Policy {
    actions: Vec<usize>,
    num_actions: usize,
    pub name: String,
    pub provenance: String,
}

impl Policy {
    pub fn new(actions: Vec<usize>, num_actions: usize) -> Result<Self> {
        if actions.is_empty() {
            return Err(Error::Dimension("policy must cover at least one observation".into()));
        }
        if let Some((y, &a)) = actions.iter().enumerate().find(|(_, &a)| a >= num_actions) {
            return Err(Error::InvalidModel(format!(
                "policy maps observation {y} to action {a}, but only {num_actions} actions exist"
            )));
        }
        Ok(Self {
            actions,
            num_actions,
            name: String::new(),
            provenance: String::new(),
        })
    }

    /// The same action for every observation.
    pub fn constant(action: usize, num_observations: usize, num_actions: usize) -> Result<Self> {
        Self::new(vec![action; num_observations], num_actions)
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn with_provenance(mut self, provenance: impl Into<String>) -> Self {
        self.provenance = provenance.into();
        self
    }

    pub fn num_observations(&self) -> usize {
        self.actions.len()
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn actions(&self) -> &[usize] {
        &self.actions
    }

    /// Plain-text table, one `observation<TAB>action` line per observation.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# name: {}", self.name);
        let _ = writeln!(out, "# provenance: {}", self.provenance);
        let _ = writeln!(out, "# actions: {}", self.num_actions);
        out.push_str("observation\taction\n");
        for (y, a) in self.actions.iter().enumerate() {
            let _ = writeln!(out, "{y}\t{a}");
        }
        out
    }

    pub fn from_table(text: &str) -> Result<Self> {
        let mut name = String::new();
        let mut provenance = String::new();
        let mut num_actions = None;
        let mut actions = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let bad = |what: &str| Error::InvalidModel(format!("policy table line {}: {what}", lineno + 1));
            if let Some(meta) = line.strip_prefix("# ") {
                if let Some(v) = meta.strip_prefix("name: ") {
                    name = v.to_string();
                } else if let Some(v) = meta.strip_prefix("provenance: ") {
                    provenance = v.to_string();
                } else if let Some(v) = meta.strip_prefix("actions: ") {
                    num_actions = Some(v.trim().parse().map_err(|_| bad("bad action count"))?);
                }
                continue;
            }
            if line.trim().is_empty() || line.starts_with("observation") {
                continue;
            }
            let mut parts = line.split('\t');
            let y: usize = parts.next().and_then(|p| p.parse().ok()).ok_or_else(|| bad("bad observation"))?;
            let a: usize = parts.next().and_then(|p| p.parse().ok()).ok_or_else(|| bad("bad action"))?;
            if y != actions.len() {
                return Err(bad("observations must be listed in order"));
            }
            actions.push(a);
        }
        let num_actions = num_actions
            .or_else(|| actions.iter().max().map(|m| m + 1))
            .unwrap_or(0);
        Ok(Self::new(actions, num_actions)?
            .with_name(name)
            .with_provenance(provenance))
    }
}

/// Looks up the expert's action for `observation`.
pub fn act(policy: &Policy, observation: usize) -> Result<usize> {
    check_index("observation", observation, policy.actions.len())?;
    Ok(policy.actions[observation])
}

/// Greedy policy of a Q table, lowest action index on ties.
pub fn greedy_policy(q: &QTable) -> Policy {
    let actions = (0..q.num_states).map(|s| argmax_lowest(q.row(s))).collect();
    Policy {
        actions,
        num_actions: q.num_actions,
        name: String::new(),
        provenance: "greedy".into(),
    }
}

/// Trains an expert that believes nominal action `a` behaves like true
/// action `believed(a)`. The returned policy is expressed in nominal labels,
/// which the controller applies to the true MDP unchanged.
pub fn train_expert(
    true_mdp: &Mdp,
    believed: &ActionPermutation,
    tol: f64,
    max_iter: usize,
) -> Result<Policy> {
    let believed_mdp = permute_actions(true_mdp, believed)?;
    let q = value_iteration(&believed_mdp, tol, max_iter)?;
    Ok(greedy_policy(&q).with_provenance(format!(
        "value iteration, believed actions {:?}, gamma {}, {} sweeps, residual {:e}{}",
        believed.as_slice(),
        true_mdp.discount(),
        q.iterations,
        q.residual,
        if q.converged { "" } else { " (not converged)" }
    )))
}

/// Like [`train_expert`], but trained to act on observations drawn from
/// `kernel` (see [`noisy_value_iteration`]).
pub fn train_expert_under_noise(
    true_mdp: &Mdp,
    believed: &ActionPermutation,
    kernel: &ObservationKernel,
    tol: f64,
    max_iter: usize,
) -> Result<Policy> {
    let believed_mdp = permute_actions(true_mdp, believed)?;
    let (q, policy) = noisy_value_iteration(&believed_mdp, kernel, tol, max_iter)?;
    Ok(policy.with_provenance(format!(
        "noise-averaged value iteration, believed actions {:?}, gamma {}, {} sweeps, residual {:e}{}",
        believed.as_slice(),
        true_mdp.discount(),
        q.iterations,
        q.residual,
        if q.converged { "" } else { " (not converged)" }
    )))
}

/// A non-empty list of experts sharing observation and action spaces.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExpertSet {
    experts: Vec<Policy>,
}

impl ExpertSet {
    pub fn new(experts: Vec<Policy>) -> Result<Self> {
        let first = experts
            .first()
            .ok_or_else(|| Error::InvalidParameter("expert set is empty".into()))?;
        let dims = (first.num_observations(), first.num_actions());
        if let Some(i) = experts
            .iter()
            .position(|p| (p.num_observations(), p.num_actions()) != dims)
        {
            return Err(Error::Dimension(format!(
                "expert {i} does not share the observation/action spaces of expert 0"
            )));
        }
        Ok(Self { experts })
    }

    pub fn len(&self) -> usize {
        self.experts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.experts.is_empty()
    }

    pub fn get(&self, i: usize) -> &Policy {
        &self.experts[i]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Policy> {
        self.experts.iter()
    }

    pub fn num_observations(&self) -> usize {
        self.experts[0].num_observations()
    }

    pub fn num_actions(&self) -> usize {
        self.experts[0].num_actions()
    }
}

impl<'a> IntoIterator for &'a ExpertSet {
    type Item = &'a Policy;
    type IntoIter = std::slice::Iter<'a, Policy>;

    fn into_iter(self) -> Self::IntoIter {
        self.experts.iter()
    }
}
