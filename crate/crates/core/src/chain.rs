//! Exact analysis of the Markov chain an expert induces on the MDP:
//! ergodicity, stationary distribution, steady-state reward, the bias
//! constant `K` bounding finite-horizon averages, and expert gaps.

use std::collections::VecDeque;
use std::fmt;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::experts::{ExpertSet, Policy};
use crate::mdp::{Mdp, ObservationKernel, PROB_TOL};

pub const STATIONARY_TOL: f64 = 1e-12;
pub const STATIONARY_MAX_ITER: usize = 1_000_000;
pub const BIAS_TAIL_TOL: f64 = 1e-12;
const BIAS_MAX_TERMS: usize = 10_000_000;
/// Number of recent decay ratios used for the tail estimate.
const RATIO_WINDOW: usize = 16;

/// Transition matrix and per-state expected reward under a fixed expert.
#[derive(Clone, Debug, PartialEq)]
pub struct InducedChain {
    num_states: usize,
    transition: Vec<f64>,
    reward: Vec<f64>,
    /// Non-zero entries of each row.
    sparse: Vec<Vec<(usize, f64)>>,
}

impl InducedChain {
    pub fn new(num_states: usize, transition: Vec<f64>, reward: Vec<f64>) -> Result<Self> {
        if num_states == 0
            || transition.len() != num_states * num_states
            || reward.len() != num_states
        {
            return Err(Error::Dimension(format!(
                "chain over {num_states} states needs a {num_states}x{num_states} matrix and {num_states} rewards"
            )));
        }
        for s in 0..num_states {
            let row = &transition[s * num_states..(s + 1) * num_states];
            let sum: f64 = row.iter().sum();
            if row.iter().any(|&p| p < 0.0) || (sum - 1.0).abs() > PROB_TOL {
                return Err(Error::InvalidModel(format!("chain row {s} is not a distribution (sum {sum})")));
            }
            if !(0.0..=1.0).contains(&reward[s]) {
                return Err(Error::InvalidModel(format!("chain reward {} at state {s} outside [0,1]", reward[s])));
            }
        }
        let sparse = transition
            .chunks(num_states)
            .map(|row| {
                row.iter()
                    .enumerate()
                    .filter(|(_, &p)| p > 0.0)
                    .map(|(t, &p)| (t, p))
                    .collect()
            })
            .collect();
        Ok(Self {
            num_states,
            transition,
            reward,
            sparse,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn row(&self, state: usize) -> &[f64] {
        &self.transition[state * self.num_states..(state + 1) * self.num_states]
    }

    pub fn transition(&self) -> &[f64] {
        &self.transition
    }

    pub fn reward(&self) -> &[f64] {
        &self.reward
    }

    /// `P v` (expectation of `v` one step ahead, per start state).
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.sparse
            .iter()
            .map(|row| row.iter().map(|&(t, p)| p * v[t]).sum())
            .collect()
    }

    /// `μ P` (distribution one step ahead).
    pub fn propagate(&self, mu: &[f64]) -> Vec<f64> {
        let n = self.num_states;
        let mut out = vec![0.0; n];
        for (row, &m) in self.sparse.iter().zip(mu) {
            if m == 0.0 {
                continue;
            }
            for &(t, p) in row {
                out[t] += m * p;
            }
        }
        out
    }

    /// The same chain with states renamed by `perm` (old `s` becomes `perm[s]`).
    pub fn relabel(&self, perm: &[usize]) -> Result<Self> {
        let n = self.num_states;
        if perm.len() != n {
            return Err(Error::Dimension("relabel permutation has the wrong length".into()));
        }
        let mut transition = vec![0.0; n * n];
        let mut reward = vec![0.0; n];
        for s in 0..n {
            reward[perm[s]] = self.reward[s];
            for t in 0..n {
                transition[perm[s] * n + perm[t]] = self.transition[s * n + t];
            }
        }
        Self::new(n, transition, reward)
    }
}

/// `P_π(s,s') = Σ_y Pr(y|s) P_{π(y)}(s,s')` and
/// `r_π(s) = Σ_y Pr(y|s) Σ_s' P_{π(y)}(s,s') r(s,π(y),s')`.
pub fn induce_chain(mdp: &Mdp, kernel: &ObservationKernel, policy: &Policy) -> Result<InducedChain> {
    let n = mdp.num_states();
    if kernel.num_states() != n {
        return Err(Error::Dimension(format!(
            "kernel covers {} states, MDP has {n}",
            kernel.num_states()
        )));
    }
    if policy.num_observations() != kernel.num_observations() {
        return Err(Error::Dimension(format!(
            "policy covers {} observations, kernel emits {}",
            policy.num_observations(),
            kernel.num_observations()
        )));
    }
    if policy.num_actions() > mdp.num_actions() {
        return Err(Error::Dimension(format!(
            "policy uses {} actions, MDP has {}",
            policy.num_actions(),
            mdp.num_actions()
        )));
    }
    let mut transition = vec![0.0; n * n];
    let mut reward = vec![0.0; n];
    for s in 0..n {
        let row = &mut transition[s * n..(s + 1) * n];
        for (y, &w) in kernel.row(s).iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let a = policy.actions()[y];
            for (o, p) in row.iter_mut().zip(mdp.transition_row(s, a)) {
                *o += w * p;
            }
            reward[s] += w * mdp.expected_reward(s, a);
        }
        // clamp rounding drift so the [0,1] invariant holds exactly
        reward[s] = reward[s].clamp(0.0, 1.0);
    }
    InducedChain::new(n, transition, reward)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ErgodicityReport {
    pub irreducible: bool,
    /// Number of strongly connected components of the support graph.
    pub num_components: usize,
    /// Period of the class containing state 0.
    pub period: usize,
}

impl ErgodicityReport {
    pub fn is_ergodic(&self) -> bool {
        self.irreducible && self.period == 1
    }
}

impl fmt::Display for ErgodicityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.irreducible, self.period) {
            (true, 1) => write!(f, "ergodic"),
            (true, p) => write!(f, "irreducible but periodic (period {p})"),
            (false, 1) => write!(f, "reducible ({} components)", self.num_components),
            (false, p) => write!(f, "reducible ({} components), period {p}", self.num_components),
        }
    }
}

fn support(chain: &InducedChain) -> Vec<Vec<usize>> {
    chain
        .sparse
        .iter()
        .map(|row| row.iter().map(|&(t, _)| t).collect())
        .collect()
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Strongly connected components (Tarjan), iterative.
fn count_components(adj: &[Vec<usize>]) -> usize {
    let n = adj.len();
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut next_index = 0;
    let mut components = 0;
    for root in 0..n {
        if index[root] != usize::MAX {
            continue;
        }
        let mut call: Vec<(usize, usize)> = vec![(root, 0)];
        index[root] = next_index;
        low[root] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&mut (v, ref mut edge)) = call.last_mut() {
            if *edge < adj[v].len() {
                let w = adj[v][*edge];
                *edge += 1;
                if index[w] == usize::MAX {
                    index[w] = next_index;
                    low[w] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                call.pop();
                if let Some(&(parent, _)) = call.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    components += 1;
                    while let Some(w) = stack.pop() {
                        on_stack[w] = false;
                        if w == v {
                            break;
                        }
                    }
                }
            }
        }
    }
    components
}

/// Irreducibility from the strongly connected components of the support
/// graph; the period is the gcd of `level(u) + 1 - level(v)` over the edges
/// reachable from state 0, with BFS levels from state 0.
pub fn check_ergodic(chain: &InducedChain) -> ErgodicityReport {
    let adj = support(chain);
    let num_components = count_components(&adj);
    let mut level = vec![usize::MAX; adj.len()];
    level[0] = 0;
    let mut queue = VecDeque::from([0]);
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if level[v] == usize::MAX {
                level[v] = level[u] + 1;
                queue.push_back(v);
            }
        }
    }
    let mut period = 0;
    for (u, targets) in adj.iter().enumerate() {
        if level[u] == usize::MAX {
            continue;
        }
        for &v in targets {
            let diff = (level[u] + 1).abs_diff(level[v]);
            period = gcd(period, diff);
        }
    }
    ErgodicityReport {
        irreducible: num_components == 1,
        num_components,
        period: period.max(1),
    }
}

fn require_ergodic(chain: &InducedChain) -> Result<()> {
    let report = check_ergodic(chain);
    if report.is_ergodic() {
        Ok(())
    } else {
        Err(Error::NotErgodic(report.to_string()))
    }
}

/// `‖μP − μ‖∞`.
pub fn stationarity_residual(chain: &InducedChain, mu: &[f64]) -> f64 {
    chain
        .propagate(mu)
        .iter()
        .zip(mu)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

/// Power iteration from the uniform distribution until `‖μP − μ‖∞ ≤ tol`.
///
/// Each step applies the lazy chain, `μ ← (μ + μP) / 2`, and rescales `μ` to
/// sum to one. The lazy chain has the same stationary distribution but maps
/// every eigenvalue `λ` to `(1 + λ) / 2`, so nearly periodic chains (such as
/// gridworlds, whose moves alternate cell parity) converge at the rate of
/// their slowest non-oscillating mode.
pub fn stationary_distribution(chain: &InducedChain, tol: f64) -> Result<Vec<f64>> {
    require_ergodic(chain)?;
    let n = chain.num_states;
    let mut mu = vec![1.0 / n as f64; n];
    let mut residual = f64::INFINITY;
    for _ in 0..STATIONARY_MAX_ITER {
        let moved = chain.propagate(&mu);
        residual = moved
            .iter()
            .zip(&mu)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if residual <= tol {
            return Ok(mu);
        }
        let mut next: Vec<f64> = moved.iter().zip(&mu).map(|(a, b)| 0.5 * (a + b)).collect();
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|x| *x /= total);
        mu = next;
    }
    Err(Error::NoConvergence {
        iterations: STATIONARY_MAX_ITER,
        residual,
    })
}

/// `Σ_s π(s) r_π(s)`.
pub fn steady_state_reward(chain: &InducedChain, stationary: &[f64]) -> f64 {
    let r: f64 = stationary.iter().zip(&chain.reward).map(|(p, r)| p * r).sum();
    r.clamp(0.0, 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BiasEstimate {
    /// `max_s0 Σ_t |(P^t r_π)(s0) − R̄|`, including the estimated tail.
    pub k: f64,
    /// Decay rate of the deviations, an estimate of `|λ₂|`.
    pub lambda2: f64,
    pub terms: usize,
    pub tail: f64,
}

/// The bias constant `K`: the largest total absolute deviation
/// `Σ_t |E[r_t | s0] − R̄|` over start states.
///
/// Deviations `d_t = P^t (r_π − R̄)` are summed until a geometric tail bound,
/// with rate taken as the largest of the recent decay ratios of `‖d_t‖∞`,
/// falls below `tail_tol`; that tail bound is added to the result. Each
/// `d_t` is re-centred to have zero mean under `stationary` so that rounding
/// in `R̄` cannot accumulate.
///
/// For every horizon `T` and start state, `|R̄ − (1/T) Σ_{t<T} E[r_t|s0]| ≤ K/T`.
pub fn bias_constant(
    chain: &InducedChain,
    stationary: &[f64],
    steady_state_reward: f64,
    tail_tol: f64,
) -> Result<BiasEstimate> {
    require_ergodic(chain)?;
    let mut d: Vec<f64> = chain.reward.iter().map(|r| r - steady_state_reward).collect();
    let recenter = |d: &mut Vec<f64>| {
        let mean: f64 = d.iter().zip(stationary).map(|(x, p)| x * p).sum();
        d.iter_mut().for_each(|x| *x -= mean);
    };
    let norm = |d: &[f64]| d.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut totals: Vec<f64> = d.iter().map(|x| x.abs()).collect();
    let mut prev = norm(&d);
    let mut ratios: VecDeque<f64> = VecDeque::with_capacity(RATIO_WINDOW);
    let mut terms = 1;

    let finish = |totals: &[f64], terms, tail: f64, ratios: &VecDeque<f64>| {
        let lambda2 = if ratios.is_empty() {
            0.0
        } else {
            let logs: f64 = ratios.iter().map(|r| r.max(f64::MIN_POSITIVE).ln()).sum();
            (logs / ratios.len() as f64).exp().min(1.0 - f64::EPSILON)
        };
        BiasEstimate {
            k: totals.iter().copied().fold(0.0, f64::max) + tail,
            lambda2,
            terms,
            tail,
        }
    };

    if prev == 0.0 {
        return Ok(finish(&totals, terms, 0.0, &ratios));
    }
    while terms < BIAS_MAX_TERMS {
        d = chain.apply(&d);
        recenter(&mut d);
        terms += 1;
        for (t, x) in totals.iter_mut().zip(&d) {
            *t += x.abs();
        }
        let m = norm(&d);
        if m == 0.0 {
            return Ok(finish(&totals, terms, 0.0, &ratios));
        }
        if ratios.len() == RATIO_WINDOW {
            ratios.pop_front();
        }
        ratios.push_back(m / prev);
        prev = m;
        if ratios.len() == RATIO_WINDOW {
            let rate = ratios.iter().copied().fold(0.0, f64::max);
            if rate < 1.0 {
                let tail = m * rate / (1.0 - rate);
                if tail < tail_tol {
                    return Ok(finish(&totals, terms, tail, &ratios));
                }
            }
        }
    }
    Err(Error::NoConvergence {
        iterations: BIAS_MAX_TERMS,
        residual: prev,
    })
}

/// Exact per-expert quantities.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainStats {
    pub stationary: Vec<f64>,
    pub steady_state_reward: f64,
    pub bias_constant: f64,
    pub second_eigenvalue_modulus: f64,
    /// `R̄_* − R̄_e`, filled by [`gaps`].
    pub gap: f64,
}

/// Ergodicity check, stationary distribution, `R̄` and `K` in one go.
pub fn analyze_chain(chain: &InducedChain) -> Result<ChainStats> {
    let stationary = stationary_distribution(chain, STATIONARY_TOL)?;
    let rbar = steady_state_reward(chain, &stationary);
    let bias = bias_constant(chain, &stationary, rbar, BIAS_TAIL_TOL)?;
    Ok(ChainStats {
        stationary,
        steady_state_reward: rbar,
        bias_constant: bias.k,
        second_eigenvalue_modulus: bias.lambda2,
        gap: 0.0,
    })
}

/// Per-expert analysis outcome; a non-ergodic expert does not stop the
/// others from being analysed.
#[derive(Clone, Debug)]
pub struct ExpertAnalysis {
    pub chain: InducedChain,
    pub ergodicity: ErgodicityReport,
    pub stats: Option<ChainStats>,
    pub error: Option<String>,
}

/// Analyses every expert (in parallel) and fills the gaps of those that succeeded.
pub fn analyze_experts(
    mdp: &Mdp,
    kernel: &ObservationKernel,
    experts: &ExpertSet,
) -> Result<(Vec<ExpertAnalysis>, Option<GapReport>)> {
    let policies: Vec<&Policy> = experts.iter().collect();
    let mut out = policies
        .par_iter()
        .map(|policy| {
            let chain = induce_chain(mdp, kernel, policy)?;
            let ergodicity = check_ergodic(&chain);
            let (stats, error) = match analyze_chain(&chain) {
                Ok(stats) => (Some(stats), None),
                Err(e) => (None, Some(e.to_string())),
            };
            Ok(ExpertAnalysis {
                chain,
                ergodicity,
                stats,
                error,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let report = if out.iter().all(|a| a.stats.is_some()) {
        let mut stats: Vec<ChainStats> = out.iter().map(|a| a.stats.clone().unwrap()).collect();
        let report = gaps(&mut stats);
        for (a, s) in out.iter_mut().zip(stats) {
            a.stats = Some(s);
        }
        Some(report)
    } else {
        None
    };
    Ok((out, report))
}

#[derive(Clone, Debug, PartialEq)]
pub struct GapReport {
    pub best: usize,
    pub best_reward: f64,
    pub gaps: Vec<f64>,
    pub bias_constants: Vec<f64>,
}

impl GapReport {
    /// Whether `R̄_* − R̄_e > 2 K_e / t0` holds; `None` for the best expert,
    /// whose gap is zero by definition.
    pub fn validity(&self, t0: f64) -> Vec<Option<bool>> {
        self.gaps
            .iter()
            .zip(&self.bias_constants)
            .enumerate()
            .map(|(e, (&gap, &k))| (e != self.best).then(|| gap > 2.0 * k / t0))
            .collect()
    }

    pub fn all_valid(&self, t0: f64) -> bool {
        self.validity(t0).into_iter().all(|v| v.unwrap_or(true))
    }

    /// Smallest integer `T0` for which every suboptimal expert satisfies the
    /// validity condition, if any exists.
    pub fn min_valid_t0(&self) -> Option<u64> {
        let mut t0: f64 = 1.0;
        for (e, (&gap, &k)) in self.gaps.iter().zip(&self.bias_constants).enumerate() {
            if e == self.best {
                continue;
            }
            if gap <= 0.0 {
                return None;
            }
            t0 = t0.max((2.0 * k / gap).floor() + 1.0);
        }
        Some(t0 as u64)
    }
}

/// Picks the best expert (lowest index on ties) and fills each gap.
pub fn gaps(stats: &mut [ChainStats]) -> GapReport {
    let mut best = 0;
    for (i, s) in stats.iter().enumerate() {
        if s.steady_state_reward > stats[best].steady_state_reward {
            best = i;
        }
    }
    let best_reward = stats.get(best).map_or(0.0, |s| s.steady_state_reward);
    for s in stats.iter_mut() {
        s.gap = best_reward - s.steady_state_reward;
    }
    GapReport {
        best,
        best_reward,
        gaps: stats.iter().map(|s| s.gap).collect(),
        bias_constants: stats.iter().map(|s| s.bias_constant).collect(),
    }
}
