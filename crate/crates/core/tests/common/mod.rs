#![allow(dead_code)]

use ucb_experts::chain::InducedChain;
use ucb_experts::config::ExperimentConfig;
use ucb_experts::controller::{DeltaSchedule, EpisodeSchedule, RunConfig, TieBreak};
use ucb_experts::experts::{ExpertSet, Policy};
use ucb_experts::mdp::{Mdp, ObservationKernel};

/// Single-state MDP whose action `a` pays `rewards[a]`, with one constant
/// expert per action.
pub fn bandit(rewards: &[f64]) -> (Mdp, ObservationKernel, ExpertSet) {
    let k = rewards.len();
    let mdp = Mdp::new(1, k, vec![1.0; k], rewards.to_vec(), 0.9, vec![1.0]).unwrap();
    let experts = (0..k).map(|a| Policy::constant(a, 1, k).unwrap()).collect();
    (mdp, ObservationKernel::identity(1), ExpertSet::new(experts).unwrap())
}

pub fn run_config(t0: u64, growth: f64, rounds: u64) -> RunConfig {
    RunConfig {
        schedule: EpisodeSchedule::new(t0, growth).unwrap(),
        deltas: DeltaSchedule::default(),
        rounds,
        tie_break: TieBreak::Lowest,
    }
}

/// Textbook UCB over arms with known per-pull rewards: untried arms first,
/// then `argmax mean_i + sqrt(2/n_i · α ln max(t, 2))` with `t` completed
/// pulls, lowest index on ties.
pub fn classical_ucb(rewards: &[f64], rounds: usize, alpha: f64) -> Vec<usize> {
    let k = rewards.len();
    let mut counts = vec![0u64; k];
    let mut sums = vec![0.0; k];
    let mut picks = Vec::with_capacity(rounds);
    for t in 0..rounds {
        let pick = match counts.iter().position(|&c| c == 0) {
            Some(i) => i,
            None => {
                let log_term = alpha * (t.max(2) as f64).ln();
                let mut best = 0;
                let mut best_index = f64::NEG_INFINITY;
                for i in 0..k {
                    let index = sums[i] / counts[i] as f64 + (2.0 / counts[i] as f64 * log_term).sqrt();
                    if index > best_index {
                        best = i;
                        best_index = index;
                    }
                }
                best
            }
        };
        counts[pick] += 1;
        sums[pick] += rewards[pick];
        picks.push(pick);
    }
    picks
}

/// Dense row-major copy of a chain's transition matrix.
pub fn dense(chain: &InducedChain) -> Vec<Vec<f64>> {
    let n = chain.num_states();
    (0..n).map(|s| chain.row(s).to_vec()).collect()
}

pub fn mat_vec(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter().map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

/// `(1/T) Σ_{t<T} (P^t r)(s)` for every start state `s`.
pub fn t_step_averages(chain: &InducedChain, horizon: usize) -> Vec<f64> {
    let p = dense(chain);
    let mut v = chain.reward().to_vec();
    let mut acc = vec![0.0; v.len()];
    for _ in 0..horizon {
        for (a, x) in acc.iter_mut().zip(&v) {
            *a += x;
        }
        v = mat_vec(&p, &v);
    }
    acc.iter().map(|a| a / horizon as f64).collect()
}

/// Default configuration with the output directory under `dir`.
pub fn default_config_in(dir: &std::path::Path) -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.run.output = dir.to_path_buf();
    c
}

/// Four identity-action experts trained under increasing corruption,
/// evaluated under corruption `epsilon`.
pub fn noise_config(epsilon: f64) -> ExperimentConfig {
    ExperimentConfig::parse(&format!(
        "[experts]\npermutations = [[0,1,2,3],[0,1,2,3],[0,1,2,3],[0,1,2,3]]\ntraining_noise = [0.0, 0.15, 0.3, 0.45]\n\
         [observation]\nkind = \"corruption\"\nepsilon = {epsilon:?}\n"
    ))
    .unwrap()
}
