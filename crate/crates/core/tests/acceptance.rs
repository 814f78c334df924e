//! End-to-end acceptance checks. Runs sequentially, prints one PASS/FAIL
//! line per criterion, and exits non-zero if any criterion fails.

mod common;

use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use ucb_experts::chain::{check_ergodic, stationarity_residual};
use ucb_experts::config::ExperimentConfig;
use ucb_experts::controller::{run_episode, run_ucb, Selector};
use ucb_experts::harness::{build_scenario, run_experiment_at, Scenario};
use ucb_experts::mdp::RngStream;
use ucb_experts::regret::{fit_regret, theoretical_bound, BoundInputs};

use common::{bandit, classical_ucb, run_config, t_step_averages};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within(elapsed: Duration, limit_secs: u64) -> bool {
    elapsed <= Duration::from_secs(limit_secs)
}

fn default_scenario() -> Scenario {
    build_scenario(&ExperimentConfig::default()).expect("default scenario builds")
}

fn chain_exactness() -> Outcome {
    let start = Instant::now();
    let scenario = default_scenario();
    let mut worst_residual: f64 = 0.0;
    let mut worst_mass: f64 = 0.0;
    let mut ergodic = true;
    for a in &scenario.analysis {
        ergodic &= check_ergodic(&a.chain).is_ergodic();
        match &a.stats {
            Some(s) => {
                worst_residual = worst_residual.max(stationarity_residual(&a.chain, &s.stationary));
                worst_mass = worst_mass.max((s.stationary.iter().sum::<f64>() - 1.0).abs());
            }
            None => ergodic = false,
        }
    }
    let elapsed = start.elapsed();
    outcome(
        ergodic && worst_residual <= 1e-10 && worst_mass <= 1e-12 && within(elapsed, 5),
        format!(
            "ergodic={ergodic}, max |piP - pi| = {worst_residual:.2e} (<= 1e-10), max |sum pi - 1| = {worst_mass:.2e} (<= 1e-12), {:.2}s (< 5s)",
            elapsed.as_secs_f64()
        ),
    )
}

fn finite_horizon_certificate() -> Outcome {
    let start = Instant::now();
    let scenario = default_scenario();
    let mut worst_ratio: f64 = 0.0;
    let mut violations = 0;
    for a in &scenario.analysis {
        let s = a.stats.as_ref().expect("ergodic");
        for horizon in [4usize, 16, 64] {
            for avg in t_step_averages(&a.chain, horizon) {
                let dev = (avg - s.steady_state_reward).abs();
                let allowed = s.bias_constant / horizon as f64;
                if dev > allowed {
                    violations += 1;
                }
                worst_ratio = worst_ratio.max(dev / allowed);
            }
        }
    }
    let elapsed = start.elapsed();
    outcome(
        violations == 0 && within(elapsed, 30),
        format!(
            "{violations} violations over 4 experts x 25 starts x T in {{4,16,64}}, max deviation / (K/T) = {worst_ratio:.4}, {:.2}s (< 30s)",
            elapsed.as_secs_f64()
        ),
    )
}

fn coverage() -> Outcome {
    const DELTA: f64 = 0.05;
    const PULLS: usize = 20;
    const T0: u64 = 4;
    const REPS: usize = 500;
    let start = Instant::now();
    let scenario = default_scenario();
    let stats: Vec<_> = scenario.analysis.iter().map(|a| a.stats.clone().expect("ergodic")).collect();
    let max_k = stats.iter().map(|s| s.bias_constant).fold(0.0, f64::max);
    let radius = (2.0 / PULLS as f64 * (1.0 / DELTA).ln()).sqrt();
    let limit = DELTA + 3.0 * (DELTA * (1.0 - DELTA) / REPS as f64).sqrt();
    let mut freqs = Vec::new();
    let mut bare = Vec::new();
    for (e, s) in stats.iter().enumerate() {
        let mut violations = 0;
        let mut bare_violations = 0;
        for rep in 0..REPS {
            let mut rng = RngStream::new(1_000_000 * (e as u64 + 1) + rep as u64);
            let mut state = scenario.mdp.sample_initial(&mut rng);
            let mut sum = 0.0;
            for _ in 0..PULLS {
                let (avg, next) =
                    run_episode(&scenario.mdp, &scenario.kernel, scenario.experts.get(e), T0, state, &mut rng).unwrap();
                sum += avg;
                state = next;
            }
            if s.steady_state_reward > sum / PULLS as f64 + radius + max_k / T0 as f64 {
                violations += 1;
            }
            if s.steady_state_reward > sum / PULLS as f64 + radius {
                bare_violations += 1;
            }
        }
        freqs.push(violations as f64 / REPS as f64);
        bare.push(bare_violations as f64 / REPS as f64);
    }
    let elapsed = start.elapsed();
    let worst = freqs.iter().copied().fold(0.0, f64::max);
    outcome(
        worst <= limit && within(elapsed, 120),
        format!(
            "violation frequencies {freqs:?} (<= {limit:.4}), max K/T0 = {:.2}; without the K/T0 term {bare:?}; {:.2}s (< 120s)",
            max_k / T0 as f64,
            elapsed.as_secs_f64()
        ),
    )
}

fn classical_reduction() -> Outcome {
    let start = Instant::now();
    let rewards = [0.9, 0.5, 0.3];
    let (mdp, kernel, experts) = bandit(&rewards);
    let trace = run_ucb(&mdp, &kernel, &experts, &run_config(1, 0.0, 200), &mut RngStream::new(0)).unwrap();
    let ours: Vec<usize> = trace.experts().collect();
    let reference = classical_ucb(&rewards, 200, 4.0);
    let first_diff = ours.iter().zip(&reference).position(|(a, b)| a != b);
    let elapsed = start.elapsed();
    outcome(
        first_diff.is_none() && ours.len() == 200 && within(elapsed, 1),
        format!(
            "first mismatch: {first_diff:?}, pulls per arm {:?}, {:.3}s (< 1s)",
            trace.records.last().unwrap().counts,
            elapsed.as_secs_f64()
        ),
    )
}

fn regret_growth(scenario: &Scenario, config: &ExperimentConfig) -> Outcome {
    let exp = run_experiment_at(scenario, config, 4, Selector::Ucb).unwrap();
    let regret = &exp.aggregate.mean_regret;
    let fit = fit_regret(regret, 500, 3000).expect("enough rounds");
    let gaps = scenario.gaps.as_ref().unwrap();
    let delta_max = gaps.gaps.iter().copied().fold(0.0, f64::max);
    let per_round = regret[2999] / 3000.0;
    outcome(
        fit.r_squared >= 0.9 && per_round <= 0.25 * delta_max,
        format!(
            "fit r(n) = {:.3} ln n + {:.3}, R^2 = {:.5} (>= 0.9); r(3000)/3000 = {per_round:.5} (<= 0.25 * {delta_max:.5} = {:.5})",
            fit.a,
            fit.b,
            fit.r_squared,
            0.25 * delta_max
        ),
    )
}

fn reward_convergence(scenario: &Scenario, config: &ExperimentConfig) -> Outcome {
    let short_run = run_experiment_at(scenario, config, 4, Selector::Ucb).unwrap();
    let episode_mean =
        short_run.series.iter().map(|s| s.mean_episode_reward[2999]).sum::<f64>() / short_run.series.len() as f64;
    let short = short_run.aggregate;
    let long = run_experiment_at(scenario, config, 40, Selector::Ucb).unwrap().aggregate;
    let best = short.best_reward;
    let final_avg = short.mean_avg_cum_reward[2999];
    let rel = (final_avg - best).abs() / best;
    let (hit_short, hit_long) = (short.first_round_reaching(0.95), long.first_round_reaching(0.95));
    let earlier = match (hit_short, hit_long) {
        (Some(a), Some(b)) => a < b,
        (Some(_), None) => true,
        _ => false,
    };
    outcome(
        rel <= 0.05 && earlier,
        format!(
            "avg cumulative reward at 3000 = {final_avg:.5} vs R* = {best:.5}, rel. error {rel:.4} (<= 0.05); first round at 95% of R*: T0=4 {hit_short:?}, T0=40 {hit_long:?}; per-episode mean at 3000 = {episode_mean:.5}"
        ),
    )
}

fn bound_consistency() -> Outcome {
    let start = Instant::now();
    let scenario = default_scenario();
    let gaps = scenario.gaps.clone().unwrap();
    let Some(t0) = gaps.min_valid_t0() else {
        return outcome(false, "no T0 satisfies the bound precondition");
    };
    let mut config = ExperimentConfig::default();
    config.run.rounds = 2000;
    let exp = run_experiment_at(&scenario, &config, t0, Selector::Ucb).unwrap();
    let regret = exp.aggregate.mean_regret[1999];
    let bound = theoretical_bound(2000, &BoundInputs::from_gaps(&gaps), &config.episode_schedule(t0).unwrap());
    let elapsed = start.elapsed();
    let holds = bound.value().is_some_and(|b| regret <= b);
    outcome(
        gaps.all_valid(t0 as f64) && holds && within(elapsed, 300),
        format!(
            "T0 = {t0} (smallest valid), mean regret at 2000 = {regret:.3}, bound = {:?}, {:.2}s (< 300s)",
            bound,
            elapsed.as_secs_f64()
        ),
    )
}

fn observation_matching() -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    for (i, eps) in [0.0, 0.15, 0.3, 0.45].into_iter().enumerate() {
        let config = common::noise_config(eps);
        let scenario = build_scenario(&config).unwrap();
        let gaps = scenario.gaps.as_ref().unwrap();
        let exp = run_experiment_at(&scenario, &config, config.schedule.t0, Selector::Ucb).unwrap();
        let mut wins = 0;
        for trace in &exp.traces {
            let mut counts = vec![0usize; trace.num_experts];
            for rec in &trace.records[2000..] {
                counts[rec.expert] += 1;
            }
            let top = counts[gaps.best];
            if counts.iter().enumerate().all(|(e, &c)| e == gaps.best || c < top) {
                wins += 1;
            }
        }
        let runner_up = gaps
            .gaps
            .iter()
            .enumerate()
            .filter(|&(e, _)| e != gaps.best)
            .map(|(_, &g)| g)
            .fold(f64::INFINITY, f64::min);
        pass &= wins >= 8;
        parts.push(format!(
            "eps={eps}: matched e{i}, best e{} (next gap {runner_up:.2e}), plurality {wins}/10",
            gaps.best
        ));
    }
    outcome(pass, parts.join("; "))
}

fn run_cli(config: &Path, out: &Path) -> bool {
    Command::new(env!("CARGO_BIN_EXE_ucb-experts"))
        .args(["run", "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(["--seed", "42"])
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("experiment.toml");
    std::fs::write(&config, "[run]\nrounds = 500\nrepetitions = 3\n[schedule]\nt0 = 8\n").unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    if !(run_cli(&config, &a) && run_cli(&config, &b)) {
        return outcome(false, "run subcommand failed");
    }
    let mut same = Vec::new();
    for file in ["trace.csv", "aggregate.csv"] {
        let (x, y) = (std::fs::read(a.join(file)).unwrap(), std::fs::read(b.join(file)).unwrap());
        same.push((file, x == y, x.len()));
    }
    outcome(
        same.iter().all(|s| s.1),
        same.iter()
            .map(|(f, eq, len)| format!("{f}: {} ({len} bytes)", if *eq { "identical" } else { "DIFFERENT" }))
            .collect::<Vec<_>>()
            .join(", "),
    )
}

fn main() -> ExitCode {
    let start = Instant::now();
    let config = ExperimentConfig::default();
    let scenario = default_scenario();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("chain-analysis exactness", Box::new(chain_exactness)),
        ("finite-horizon certificate", Box::new(finite_horizon_certificate)),
        ("confidence coverage", Box::new(coverage)),
        ("classical UCB reduction", Box::new(classical_reduction)),
        ("logarithmic regret growth", Box::new(|| regret_growth(&scenario, &config))),
        ("reward convergence", Box::new(|| reward_convergence(&scenario, &config))),
        ("regret bound consistency", Box::new(bound_consistency)),
        ("observation-model selection", Box::new(observation_matching)),
        ("determinism", Box::new(determinism)),
    ];
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let o = check();
        println!(
            "criterion {} [{name}]: {} ({:.1}s) {}",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64(),
            o.detail
        );
        if !o.pass {
            failed.push(i + 1);
        }
    }
    println!("acceptance: {} of {} passed in {:.1}s", criteria.len() - failed.len(), criteria.len(), start.elapsed().as_secs_f64());
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed criteria: {failed:?}");
        ExitCode::FAILURE
    }
}
