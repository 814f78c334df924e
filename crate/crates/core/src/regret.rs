//! Empirical regret, the theoretical regret bound, and pull-fraction curves.

use std::f64::consts::PI;

use crate::chain::GapReport;
use crate::controller::{EpisodeSchedule, RunTrace};

/// `1 + π²/3`.
pub const C1: f64 = 1.0 + PI * PI / 3.0;

/// Per-round regret curves. Entry `k` describes the state after `k + 1`
/// completed rounds.
#[derive(Clone, Debug, PartialEq)]
pub struct RegretSeries {
    /// `r(n) = n R̄_* − Σ_{k<n} r_k`.
    pub cumulative_regret: Vec<f64>,
    /// Total reward divided by elapsed MDP steps.
    pub avg_cumulative_reward: Vec<f64>,
    /// Running mean of the episode averages, `(n R̄_* − r(n)) / n`.
    pub mean_episode_reward: Vec<f64>,
    /// `pull_fractions[k][i] = n_i / (k + 1)`.
    pub pull_fractions: Vec<Vec<f64>>,
}

pub fn empirical_regret(trace: &RunTrace, best_reward: f64) -> RegretSeries {
    let mut regret = Vec::with_capacity(trace.len());
    let mut avg = Vec::with_capacity(trace.len());
    let mut per_step = Vec::with_capacity(trace.len());
    let mut sum = 0.0;
    let mut total_reward = 0.0;
    let mut steps = 0u64;
    for (k, rec) in trace.records.iter().enumerate() {
        let n = (k + 1) as f64;
        sum += rec.episode_avg_reward;
        total_reward += rec.episode_avg_reward * rec.episode_length as f64;
        steps += rec.episode_length;
        regret.push(n * best_reward - sum);
        avg.push(sum / n);
        per_step.push(total_reward / steps as f64);
    }
    RegretSeries {
        cumulative_regret: regret,
        avg_cumulative_reward: per_step,
        mean_episode_reward: avg,
        pull_fractions: pull_fractions(trace),
    }
}

/// `n_i(n) / n` after every round.
pub fn pull_fractions(trace: &RunTrace) -> Vec<Vec<f64>> {
    trace
        .records
        .iter()
        .enumerate()
        .map(|(k, rec)| {
            let n = (k + 1) as f64;
            rec.counts.iter().map(|&c| c as f64 / n).collect()
        })
        .collect()
}

/// Inputs to the regret bound.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundInputs {
    pub gaps: Vec<f64>,
    pub bias_constants: Vec<f64>,
    pub best: usize,
}

impl BoundInputs {
    pub fn from_gaps(report: &GapReport) -> Self {
        Self {
            gaps: report.gaps.clone(),
            bias_constants: report.bias_constants.clone(),
            best: report.best,
        }
    }

    pub fn best_bias(&self) -> f64 {
        self.bias_constants[self.best]
    }

    /// `c_e = Δ_e + K_e / T0`.
    pub fn c_e(&self, e: usize, t0: u64) -> f64 {
        self.gaps[e] + self.bias_constants[e] / t0 as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Bound {
    Value(f64),
    Inapplicable(String),
}

impl Bound {
    pub fn value(&self) -> Option<f64> {
        match self {
            Bound::Value(v) => Some(*v),
            Bound::Inapplicable(_) => None,
        }
    }
}

/// Right-hand side of the expected-regret bound after `n ≥ 2` rounds:
///
/// `Σ_{e≠e*} [(32 ln n / (Δ_e − 2K_e/T_n)² + c₁) c_e] + Σ_{k<n} K_*/T_k`.
///
/// Inapplicable when some suboptimal expert violates `Δ_e > 2K_e/T0` or a
/// denominator is not positive.
pub fn theoretical_bound(n: u64, inputs: &BoundInputs, schedule: &EpisodeSchedule) -> Bound {
    if n < 2 {
        return Bound::Inapplicable(format!("bound needs n ≥ 2, got {n}"));
    }
    let t0 = schedule.t0();
    let tn = schedule.length(n) as f64;
    let log_n = (n as f64).ln();
    let mut total = 0.0;
    for e in 0..inputs.gaps.len() {
        if e == inputs.best {
            continue;
        }
        let (gap, k) = (inputs.gaps[e], inputs.bias_constants[e]);
        if gap <= 2.0 * k / t0 as f64 {
            return Bound::Inapplicable(format!(
                "expert {e}: gap {gap:.6} ≤ 2K/T0 = {:.6}",
                2.0 * k / t0 as f64
            ));
        }
        let margin = gap - 2.0 * k / tn;
        if margin <= 0.0 {
            return Bound::Inapplicable(format!("expert {e}: Δ − 2K/T_n = {margin} ≤ 0"));
        }
        total += (32.0 * log_n / (margin * margin) + C1) * inputs.c_e(e, t0);
    }
    let k_star = inputs.best_bias();
    total += (0..n).map(|k| k_star / schedule.length(k) as f64).sum::<f64>();
    Bound::Value(total)
}

/// Least-squares fit `y = a ln(x) + b`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogFit {
    pub a: f64,
    pub b: f64,
    pub r_squared: f64,
}

/// Fits `ys[i] ≈ a ln(xs[i]) + b`; `None` for fewer than two points or
/// constant `ln x`.
pub fn log_fit(xs: &[f64], ys: &[f64]) -> Option<LogFit> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let m = lx.len() as f64;
    let mean_x = lx.iter().sum::<f64>() / m;
    let mean_y = ys.iter().sum::<f64>() / m;
    let sxx: f64 = lx.iter().map(|x| (x - mean_x).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = lx.iter().zip(ys).map(|(x, y)| (x - mean_x) * (y - mean_y)).sum();
    let a = sxy / sxx;
    let b = mean_y - a * mean_x;
    let ss_tot: f64 = ys.iter().map(|y| (y - mean_y).powi(2)).sum();
    let ss_res: f64 = lx.iter().zip(ys).map(|(x, y)| (y - a * x - b).powi(2)).sum();
    let r_squared = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Some(LogFit { a, b, r_squared })
}

/// Fits the regret curve over rounds `from..=to` (1-based round counts).
pub fn fit_regret(regret: &[f64], from: usize, to: usize) -> Option<LogFit> {
    let to = to.min(regret.len());
    if from < 1 || from > to {
        return None;
    }
    let xs: Vec<f64> = (from..=to).map(|n| n as f64).collect();
    log_fit(&xs, &regret[from - 1..to])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::RoundRecord;
    use proptest::prelude::*;

    fn trace_with(avgs: &[f64], experts: &[usize], k: usize) -> RunTrace {
        let mut counts = vec![0; k];
        let records = avgs
            .iter()
            .zip(experts)
            .enumerate()
            .map(|(n, (&a, &e))| {
                counts[e] += 1;
                RoundRecord {
                    round: n as u64,
                    expert: e,
                    episode_length: 4,
                    episode_avg_reward: a,
                    means: vec![0.0; k],
                    radii: vec![0.0; k],
                    counts: counts.clone(),
                }
            })
            .collect();
        RunTrace {
            num_experts: k,
            initial_state: 0,
            records,
            terminal_state: 0,
            total_steps: 4 * avgs.len() as u64,
        }
    }

    #[test]
    fn zero_gap_means_zero_regret() {
        let t = trace_with(&[0.5; 20], &[0; 20], 1);
        let s = empirical_regret(&t, 0.5);
        assert!(s.cumulative_regret.iter().all(|&r| r == 0.0));
        assert!(s.avg_cumulative_reward.iter().all(|&r| r == 0.5));
    }

    #[test]
    fn constant_shortfall_grows_linearly() {
        let t = trace_with(&[0.4; 10], &[0; 10], 1);
        let s = empirical_regret(&t, 0.5);
        for (k, r) in s.cumulative_regret.iter().enumerate() {
            assert!((r - 0.1 * (k + 1) as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn fractions() {
        let t = trace_with(&[0.1, 0.2, 0.3, 0.4], &[0, 1, 2, 3], 4);
        let f = pull_fractions(&t);
        assert!(f[3].iter().all(|&x| x == 0.25));
        let fixed = trace_with(&[0.1; 5], &[2; 5], 3);
        assert!(pull_fractions(&fixed).iter().all(|row| row[2] == 1.0));
    }

    #[test]
    fn c1_value() {
        assert!((C1 - 4.289_868_133_696_453).abs() < 1e-12);
    }

    #[test]
    fn single_expert_bound_is_bias_sum() {
        let inputs = BoundInputs { gaps: vec![0.0], bias_constants: vec![3.0], best: 0 };
        let sched = EpisodeSchedule::new(4, 0.1).unwrap();
        let expect: f64 = (0..50).map(|k| 3.0 / sched.length(k) as f64).sum();
        assert!((theoretical_bound(50, &inputs, &sched).value().unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn iid_arms_reduce_to_classical_shape() {
        let inputs = BoundInputs { gaps: vec![0.0, 0.3, 0.5], bias_constants: vec![0.0; 3], best: 0 };
        let sched = EpisodeSchedule::new(10, 0.0).unwrap();
        let n: u64 = 1000;
        let ln = (n as f64).ln();
        let expect: f64 = [0.3f64, 0.5].iter().map(|d| (32.0 * ln / (d * d) + C1) * d).sum();
        assert!((theoretical_bound(n, &inputs, &sched).value().unwrap() - expect).abs() < 1e-9);
    }

    #[test]
    fn inapplicable_cases() {
        let inputs = BoundInputs { gaps: vec![0.0, 0.1], bias_constants: vec![1.0, 1.0], best: 0 };
        let sched = EpisodeSchedule::new(4, 0.1).unwrap();
        assert!(matches!(theoretical_bound(100, &inputs, &sched), Bound::Inapplicable(_)));
        let ok = EpisodeSchedule::new(40, 0.1).unwrap();
        assert!(theoretical_bound(100, &inputs, &ok).value().is_some());
        assert!(matches!(theoretical_bound(1, &inputs, &ok), Bound::Inapplicable(_)));
    }

    #[test]
    fn log_fit_recovers_curve() {
        let xs: Vec<f64> = (1..=100).map(f64::from).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x.ln() - 2.0).collect();
        let fit = log_fit(&xs, &ys).unwrap();
        assert!((fit.a - 3.0).abs() < 1e-10 && (fit.b + 2.0).abs() < 1e-10);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        assert!(log_fit(&[1.0], &[1.0]).is_none());
        let fit = fit_regret(&ys, 10, 100).unwrap();
        assert!((fit.a - 3.0).abs() < 1e-10);
    }

    proptest! {
        #[test]
        fn regret_telescopes(avgs in prop::collection::vec(0.0f64..=1.0, 1..60), best in 0.0f64..=1.0) {
            let experts = vec![0; avgs.len()];
            let s = empirical_regret(&trace_with(&avgs, &experts, 1), best);
            prop_assert!((s.cumulative_regret[0] - (best - avgs[0])).abs() < 1e-12);
            for n in 1..avgs.len() {
                let step = s.cumulative_regret[n] - s.cumulative_regret[n - 1];
                prop_assert!((step - (best - avgs[n])).abs() < 1e-12);
            }
            for row in &s.pull_fractions {
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn bound_monotone_for_fixed_horizons(
            gaps in prop::collection::vec(0.05f64..1.0, 1..5),
            ks in prop::collection::vec(0.0f64..5.0, 5),
            t0 in 1u64..200,
        ) {
            let mut g = vec![0.0];
            g.extend(gaps);
            let inputs = BoundInputs { bias_constants: ks[..g.len()].to_vec(), gaps: g, best: 0 };
            let sched = EpisodeSchedule::new(t0, 0.0).unwrap();
            let mut prev = None;
            for n in 2..300 {
                match theoretical_bound(n, &inputs, &sched) {
                    Bound::Value(v) => {
                        if let Some(p) = prev { prop_assert!(v >= p); }
                        prev = Some(v);
                    }
                    Bound::Inapplicable(_) => prop_assert!(prev.is_none()),
                }
            }
        }
    }
}
