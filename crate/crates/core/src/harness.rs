//! Seeded multi-run experiments: scenario construction, repetitions,
//! aggregation across runs, and the CSV and summary outputs.

use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::chain::{analyze_experts, ExpertAnalysis, GapReport};
use crate::config::{ExperimentConfig, ObservationKind};
use crate::controller::{run_baseline, run_ucb, RunConfig, RunTrace, Selector};
use crate::error::{Error, Result};
use crate::experts::{train_expert, train_expert_under_noise, ExpertSet, Policy};
use crate::gridworld::{build_gridworld, corruption_kernel, GridLayout};
use crate::mdp::{Mdp, ObservationKernel, RngStream};
use crate::regret::{empirical_regret, fit_regret, theoretical_bound, Bound, BoundInputs, LogFit, RegretSeries};

/// Everything that stays fixed across repetitions.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub layout: GridLayout,
    pub mdp: Mdp,
    pub kernel: ObservationKernel,
    pub experts: ExpertSet,
    pub analysis: Vec<ExpertAnalysis>,
    pub gaps: Option<GapReport>,
}

impl Scenario {
    /// The gap report, or an error naming the experts whose chains could
    /// not be analysed.
    pub fn require_gaps(&self) -> Result<&GapReport> {
        self.gaps.as_ref().ok_or_else(|| {
            let failed: Vec<String> = self
                .analysis
                .iter()
                .enumerate()
                .filter_map(|(e, a)| a.error.as_ref().map(|msg| format!("expert {e}: {msg}")))
                .collect();
            Error::InvalidModel(format!("steady-state rewards unavailable; {}", failed.join("; ")))
        })
    }
}

/// Builds the MDP and observation kernel, trains the experts and analyses
/// their induced chains.
pub fn build_scenario(config: &ExperimentConfig) -> Result<Scenario> {
    config.validate()?;
    let layout = config.layout()?;
    let mdp = build_gridworld(&layout, config.dynamics(), config.experts.discount)?;
    let n = mdp.num_states();
    let kernel = match config.observation.kind {
        ObservationKind::Identity => ObservationKernel::identity(n),
        ObservationKind::Corruption => corruption_kernel(n, config.observation.epsilon)?,
    };
    let (tol, max_iter) = (config.experts.tolerance, config.experts.max_iterations);
    let noise = &config.experts.training_noise;
    let policies = config
        .permutations()
        .par_iter()
        .enumerate()
        .map(|(e, perm)| -> Result<Policy> {
            let policy = match noise.get(e) {
                Some(&eps) => train_expert_under_noise(&mdp, perm, &corruption_kernel(n, eps)?, tol, max_iter)?,
                None => train_expert(&mdp, perm, tol, max_iter)?,
            };
            Ok(policy.with_name(format!("e{e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let experts = ExpertSet::new(policies)?;
    let (analysis, gaps) = analyze_experts(&mdp, &kernel, &experts)?;
    Ok(Scenario {
        layout,
        mdp,
        kernel,
        experts,
        analysis,
        gaps,
    })
}

/// Runs `config.run.repetitions` independent runs; run `r` is seeded with
/// `base_seed + r`. Runs execute in parallel and are returned in order.
pub fn run_repetitions(
    scenario: &Scenario,
    config: &ExperimentConfig,
    t0: u64,
    selector: Selector,
) -> Result<Vec<RunTrace>> {
    let schedule = config.episode_schedule(t0)?;
    (0..config.run.repetitions as u64)
        .into_par_iter()
        .map(|r| {
            let seed = config.run.base_seed.wrapping_add(r);
            let run = RunConfig {
                schedule,
                deltas: config.deltas(),
                rounds: config.run.rounds,
                tie_break: config.tie_break(seed),
            };
            let mut rng = RngStream::new(seed);
            let (mdp, kernel, experts) = (&scenario.mdp, &scenario.kernel, &scenario.experts);
            match selector {
                Selector::Ucb => run_ucb(mdp, kernel, experts, &run, &mut rng),
                other => run_baseline(other, mdp, kernel, experts, &run, &mut rng),
            }
        })
        .collect()
}

/// Per-round mean and sample standard deviation across runs.
#[derive(Clone, Debug, PartialEq)]
pub struct AggregateResult {
    pub t0: u64,
    pub repetitions: usize,
    pub best: usize,
    pub best_reward: f64,
    pub mean_regret: Vec<f64>,
    pub sd_regret: Vec<f64>,
    pub mean_avg_cum_reward: Vec<f64>,
    pub sd_avg_cum_reward: Vec<f64>,
    /// `mean_fractions[k][e]`, the mean share of expert `e` after `k + 1` rounds.
    pub mean_fractions: Vec<Vec<f64>>,
    /// Fit of the mean regret over rounds `[N/2, N]`.
    pub fit: Option<LogFit>,
    /// Bound at the final round.
    pub bound: Bound,
}

impl AggregateResult {
    pub fn rounds(&self) -> usize {
        self.mean_regret.len()
    }

    /// First round (1-based) at which the mean average cumulative reward
    /// reaches `fraction` of the best steady-state reward.
    pub fn first_round_reaching(&self, fraction: f64) -> Option<usize> {
        let target = fraction * self.best_reward;
        self.mean_avg_cum_reward.iter().position(|&r| r >= target).map(|k| k + 1)
    }
}

/// Streaming mean and variance. The mean of identical values is exact.
#[derive(Clone, Copy, Debug, Default)]
struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1.0;
        let d = x - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (x - self.mean);
    }

    fn sd(&self) -> f64 {
        if self.n < 2.0 {
            0.0
        } else {
            (self.m2 / (self.n - 1.0)).sqrt()
        }
    }
}

fn moments<'a>(curves: impl Iterator<Item = &'a [f64]>, len: usize) -> (Vec<f64>, Vec<f64>) {
    let mut acc = vec![Moments::default(); len];
    for curve in curves {
        for (m, &x) in acc.iter_mut().zip(curve) {
            m.push(x);
        }
    }
    (acc.iter().map(|m| m.mean).collect(), acc.iter().map(Moments::sd).collect())
}

/// Aggregates per-run series in run order.
pub fn aggregate(series: &[RegretSeries], gaps: &GapReport, config: &ExperimentConfig, t0: u64) -> Result<AggregateResult> {
    let len = series.first().map_or(0, |s| s.cumulative_regret.len());
    if len == 0 || series.iter().any(|s| s.cumulative_regret.len() != len) {
        return Err(Error::Dimension("runs to aggregate must be non-empty and of equal length".into()));
    }
    let (mean_regret, sd_regret) = moments(series.iter().map(|s| s.cumulative_regret.as_slice()), len);
    let (mean_avg, sd_avg) = moments(series.iter().map(|s| s.avg_cumulative_reward.as_slice()), len);
    let k = gaps.gaps.len();
    let mut mean_fractions = vec![vec![0.0; k]; len];
    for e in 0..k {
        let curves: Vec<Vec<f64>> = series
            .iter()
            .map(|s| s.pull_fractions.iter().map(|f| f[e]).collect())
            .collect();
        let (mean, _) = moments(curves.iter().map(Vec::as_slice), len);
        for (row, m) in mean_fractions.iter_mut().zip(mean) {
            row[e] = m;
        }
    }
    let fit = fit_regret(&mean_regret, (len / 2).max(1), len);
    let bound = theoretical_bound(len as u64, &BoundInputs::from_gaps(gaps), &config.episode_schedule(t0)?);
    Ok(AggregateResult {
        t0,
        repetitions: series.len(),
        best: gaps.best,
        best_reward: gaps.best_reward,
        mean_regret,
        sd_regret,
        mean_avg_cum_reward: mean_avg,
        sd_avg_cum_reward: sd_avg,
        mean_fractions,
        fit,
        bound,
    })
}

/// One configured experiment after all repetitions.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub selector: Selector,
    pub traces: Vec<RunTrace>,
    pub series: Vec<RegretSeries>,
    pub aggregate: AggregateResult,
}

/// Runs every repetition at the given `T0` and aggregates.
pub fn run_experiment_at(scenario: &Scenario, config: &ExperimentConfig, t0: u64, selector: Selector) -> Result<Experiment> {
    let gaps = scenario.require_gaps()?;
    let traces = run_repetitions(scenario, config, t0, selector)?;
    let series: Vec<RegretSeries> = traces.iter().map(|t| empirical_regret(t, gaps.best_reward)).collect();
    let aggregate = aggregate(&series, gaps, config, t0)?;
    Ok(Experiment {
        selector,
        traces,
        series,
        aggregate,
    })
}

/// Builds the scenario and runs the configured experiment.
pub fn run_experiment(config: &ExperimentConfig) -> Result<(Scenario, Experiment)> {
    let scenario = build_scenario(config)?;
    let best = scenario.gaps.as_ref().map(|g| g.best);
    let selector = config.selector()?.resolve(best)?;
    let experiment = run_experiment_at(&scenario, config, config.schedule.t0, selector)?;
    Ok((scenario, experiment))
}

/// Runs the experiment once per `T0` in `t0s`.
pub fn sweep(config: &ExperimentConfig, t0s: &[u64]) -> Result<(Scenario, Vec<Experiment>)> {
    if t0s.is_empty() {
        return Err(Error::Config("sweep needs at least one t0".into()));
    }
    let scenario = build_scenario(config)?;
    let selector = config.selector()?.resolve(scenario.gaps.as_ref().map(|g| g.best))?;
    let runs = t0s
        .iter()
        .map(|&t0| run_experiment_at(&scenario, config, t0, selector))
        .collect::<Result<Vec<_>>>()?;
    Ok((scenario, runs))
}

/// Validity of the bound's precondition for one expert at one `T0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Validity {
    Best,
    Pass,
    Fail,
    Unknown,
}

impl fmt::Display for Validity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Validity::Best => "best",
            Validity::Pass => "pass",
            Validity::Fail => "fail",
            Validity::Unknown => "n/a",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnalysisRow {
    pub expert: usize,
    pub permutation: Vec<usize>,
    pub ergodic: bool,
    pub period: usize,
    pub components: usize,
    pub steady_state_reward: Option<f64>,
    pub bias_constant: Option<f64>,
    pub second_eigenvalue_modulus: Option<f64>,
    pub gap: Option<f64>,
    pub validity: Vec<Validity>,
    pub error: Option<String>,
}

/// Per-expert chain analysis with the bound's validity at each `T0`.
#[derive(Clone, Debug, PartialEq)]
pub struct AnalysisTable {
    pub t0s: Vec<u64>,
    pub rows: Vec<AnalysisRow>,
    pub best: Option<usize>,
    pub min_valid_t0: Option<u64>,
}

/// The `T0` values a config refers to: `schedule.t0` and the sweep list.
pub fn configured_t0s(config: &ExperimentConfig) -> Vec<u64> {
    let mut t0s = config.schedule.sweep.clone();
    t0s.push(config.schedule.t0);
    t0s.sort_unstable();
    t0s.dedup();
    t0s
}

pub fn analysis_table(scenario: &Scenario, config: &ExperimentConfig, t0s: &[u64]) -> AnalysisTable {
    let validity: Vec<Vec<Option<bool>>> = match &scenario.gaps {
        Some(g) => t0s.iter().map(|&t| g.validity(t as f64)).collect(),
        None => Vec::new(),
    };
    let rows = scenario
        .analysis
        .iter()
        .enumerate()
        .map(|(e, a)| {
            let stats = a.stats.as_ref();
            AnalysisRow {
                expert: e,
                permutation: config.experts.permutations[e].clone(),
                ergodic: a.ergodicity.is_ergodic(),
                period: a.ergodicity.period,
                components: a.ergodicity.num_components,
                steady_state_reward: stats.map(|s| s.steady_state_reward),
                bias_constant: stats.map(|s| s.bias_constant),
                second_eigenvalue_modulus: stats.map(|s| s.second_eigenvalue_modulus),
                gap: scenario.gaps.as_ref().and_then(|g| g.gaps.get(e).copied()),
                validity: (0..t0s.len())
                    .map(|i| match validity.get(i).map(|v| v[e]) {
                        Some(Some(true)) => Validity::Pass,
                        Some(Some(false)) => Validity::Fail,
                        Some(None) => Validity::Best,
                        None => Validity::Unknown,
                    })
                    .collect(),
                error: a.error.clone(),
            }
        })
        .collect();
    AnalysisTable {
        t0s: t0s.to_vec(),
        rows,
        best: scenario.gaps.as_ref().map(|g| g.best),
        min_valid_t0: scenario.gaps.as_ref().and_then(GapReport::min_valid_t0),
    }
}

/// Seventeen significant digits.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt_float(x: Option<f64>) -> String {
    x.map(fmt_float).unwrap_or_default()
}

impl AnalysisTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "expert,permutation,ergodic,period,components,steady_state_reward,bias_constant,second_eigenvalue_modulus,gap",
        );
        for t in &self.t0s {
            write!(out, ",valid_t0_{t}").unwrap();
        }
        out.push_str(",error\n");
        for r in &self.rows {
            let perm: Vec<String> = r.permutation.iter().map(usize::to_string).collect();
            write!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.expert,
                perm.join(" "),
                r.ergodic,
                r.period,
                r.components,
                opt_float(r.steady_state_reward),
                opt_float(r.bias_constant),
                opt_float(r.second_eigenvalue_modulus),
                opt_float(r.gap),
            )
            .unwrap();
            for v in &r.validity {
                write!(out, ",{v}").unwrap();
            }
            let err = r.error.as_deref().unwrap_or("").replace(['"', ','], ";");
            writeln!(out, ",{err}").unwrap();
        }
        out
    }
}

impl fmt::Display for AnalysisTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let short = |x: Option<f64>, p: usize| x.map_or("-".to_string(), |v| format!("{v:.p$}"));
        write!(f, "{:<7} {:<10} {:<8} {:>10} {:>12} {:>10} {:>10}", "expert", "perm", "ergodic", "R_bar", "K", "|lambda2|", "gap")?;
        for t in &self.t0s {
            write!(f, " {:>7}", format!("T0={t}"))?;
        }
        writeln!(f)?;
        for r in &self.rows {
            let perm: Vec<String> = r.permutation.iter().map(usize::to_string).collect();
            let ergodic = if r.ergodic { "yes".to_string() } else { format!("no(p={})", r.period) };
            write!(
                f,
                "{:<7} {:<10} {:<8} {:>10} {:>12} {:>10} {:>10}",
                format!("e{}", r.expert),
                perm.join(""),
                ergodic,
                short(r.steady_state_reward, 6),
                short(r.bias_constant, 4),
                short(r.second_eigenvalue_modulus, 6),
                short(r.gap, 6)
            )?;
            for v in &r.validity {
                write!(f, " {:>7}", v.to_string())?;
            }
            writeln!(f)?;
            if let Some(e) = &r.error {
                writeln!(f, "        error: {e}")?;
            }
        }
        match (self.best, self.min_valid_t0) {
            (Some(b), Some(t)) => writeln!(f, "best expert: e{b}; bound precondition holds for T0 >= {t}"),
            (Some(b), None) => writeln!(f, "best expert: e{b}; bound precondition fails for every T0"),
            _ => writeln!(f, "best expert unknown: some chains could not be analysed"),
        }
    }
}

/// One row per run and round; rounds are numbered from 1.
pub fn trace_csv(traces: &[RunTrace], series: &[RegretSeries]) -> String {
    let k = traces.first().map_or(0, |t| t.num_experts);
    let mut out = String::from("run_id,round,chosen_expert,episode_length,episode_avg_reward,cumulative_regret");
    for e in 0..k {
        write!(out, ",n_{e}").unwrap();
    }
    out.push('\n');
    for (run, (trace, s)) in traces.iter().zip(series).enumerate() {
        for (i, rec) in trace.records.iter().enumerate() {
            write!(
                out,
                "{run},{},{},{},{},{}",
                i + 1,
                rec.expert,
                rec.episode_length,
                fmt_float(rec.episode_avg_reward),
                fmt_float(s.cumulative_regret[i])
            )
            .unwrap();
            for c in &rec.counts {
                write!(out, ",{c}").unwrap();
            }
            out.push('\n');
        }
    }
    out
}

pub fn aggregate_csv(agg: &AggregateResult) -> String {
    let k = agg.mean_fractions.first().map_or(0, Vec::len);
    let mut out = String::from("round,mean_regret,sd_regret,mean_avg_cum_reward,sd_avg_cum_reward");
    for e in 0..k {
        write!(out, ",mean_frac_{e}").unwrap();
    }
    out.push('\n');
    for i in 0..agg.rounds() {
        write!(
            out,
            "{},{},{},{},{}",
            i + 1,
            fmt_float(agg.mean_regret[i]),
            fmt_float(agg.sd_regret[i]),
            fmt_float(agg.mean_avg_cum_reward[i]),
            fmt_float(agg.sd_avg_cum_reward[i])
        )
        .unwrap();
        for f in &agg.mean_fractions[i] {
            write!(out, ",{}", fmt_float(*f)).unwrap();
        }
        out.push('\n');
    }
    out
}

fn describe_deltas(config: &ExperimentConfig) -> String {
    match config.deltas() {
        crate::controller::DeltaSchedule::Fixed(d) => format!("fixed({d})"),
        crate::controller::DeltaSchedule::Polynomial { alpha } => format!("polynomial(alpha = {alpha})"),
    }
}

/// Plain-text key/value summary of one aggregated experiment.
pub fn summary_text(config: &ExperimentConfig, exp: &Experiment) -> String {
    let agg = &exp.aggregate;
    let n = agg.rounds();
    let mut out = String::new();
    let mut line = |key: &str, value: String| writeln!(out, "{key:<26} {value}").unwrap();
    line("selector", exp.selector.to_string());
    line("t0", agg.t0.to_string());
    line("growth", config.schedule.growth.to_string());
    line("delta", describe_deltas(config));
    line("rounds", n.to_string());
    line("repetitions", agg.repetitions.to_string());
    line("base_seed", config.run.base_seed.to_string());
    line("best_expert", agg.best.to_string());
    line("best_steady_state_reward", fmt_float(agg.best_reward));
    line("final_mean_regret", fmt_float(agg.mean_regret[n - 1]));
    line("final_sd_regret", fmt_float(agg.sd_regret[n - 1]));
    line("final_mean_avg_cum_reward", fmt_float(agg.mean_avg_cum_reward[n - 1]));
    for (e, f) in agg.mean_fractions[n - 1].iter().enumerate() {
        line(&format!("final_mean_frac_{e}"), fmt_float(*f));
    }
    line("fit_rounds", format!("[{}, {}]", (n / 2).max(1), n));
    match agg.fit {
        Some(fit) => {
            line("fit_a", fmt_float(fit.a));
            line("fit_b", fmt_float(fit.b));
            line("fit_r_squared", fmt_float(fit.r_squared));
        }
        None => line("fit", "unavailable (too few rounds)".into()),
    }
    match &agg.bound {
        Bound::Value(b) => {
            line("bound", fmt_float(*b));
            let holds = agg.mean_regret[n - 1] <= *b;
            line("bound_verdict", if holds { "holds" } else { "violated" }.into());
        }
        Bound::Inapplicable(reason) => {
            line("bound", "inapplicable".into());
            line("bound_verdict", format!("inapplicable: {reason}"));
        }
    }
    out
}

/// Writes `files` into `dir`. If any write fails, the files written by this
/// call are removed again (and `dir`, if this call created it).
pub fn write_outputs(dir: &Path, files: &[(PathBuf, String)]) -> Result<()> {
    let created_dir = !dir.exists();
    let mut written: Vec<PathBuf> = Vec::new();
    let mut made_dirs: Vec<PathBuf> = Vec::new();
    let result = (|| -> std::io::Result<()> {
        fs::create_dir_all(dir)?;
        for (rel, contents) in files {
            let path = dir.join(rel);
            if let Some(parent) = path.parent() {
                if !parent.exists() {
                    fs::create_dir_all(parent)?;
                    made_dirs.push(parent.to_path_buf());
                }
            }
            fs::write(&path, contents)?;
            written.push(path);
        }
        Ok(())
    })();
    if let Err(e) = result {
        for path in &written {
            let _ = fs::remove_file(path);
        }
        for d in made_dirs.iter().rev() {
            let _ = fs::remove_dir(d);
        }
        if created_dir {
            let _ = fs::remove_dir(dir);
        }
        return Err(Error::Io(e));
    }
    Ok(())
}

/// Output files for a single experiment.
pub fn experiment_files(config: &ExperimentConfig, table: &AnalysisTable, exp: &Experiment) -> Vec<(PathBuf, String)> {
    vec![
        ("analysis.csv".into(), table.to_csv()),
        ("trace.csv".into(), trace_csv(&exp.traces, &exp.series)),
        ("aggregate.csv".into(), aggregate_csv(&exp.aggregate)),
        ("summary.txt".into(), summary_text(config, exp)),
    ]
}

/// Output files for a sweep: per-`T0` subdirectories plus a top-level
/// analysis table and comparison summary.
pub fn sweep_files(config: &ExperimentConfig, table: &AnalysisTable, runs: &[Experiment]) -> Vec<(PathBuf, String)> {
    let mut files = vec![("analysis.csv".into(), table.to_csv())];
    let mut summary = String::from("t0,final_mean_regret,final_sd_regret,final_mean_avg_cum_reward,first_round_95pct,bound,fit_r_squared\n");
    for exp in runs {
        let agg = &exp.aggregate;
        let dir = PathBuf::from(format!("t0_{}", agg.t0));
        files.push((dir.join("trace.csv"), trace_csv(&exp.traces, &exp.series)));
        files.push((dir.join("aggregate.csv"), aggregate_csv(agg)));
        files.push((dir.join("summary.txt"), summary_text(config, exp)));
        let n = agg.rounds();
        writeln!(
            summary,
            "{},{},{},{},{},{},{}",
            agg.t0,
            fmt_float(agg.mean_regret[n - 1]),
            fmt_float(agg.sd_regret[n - 1]),
            fmt_float(agg.mean_avg_cum_reward[n - 1]),
            agg.first_round_reaching(0.95).map_or("never".into(), |r| r.to_string()),
            agg.bound.value().map_or("inapplicable".into(), fmt_float),
            agg.fit.map_or(String::new(), |f| fmt_float(f.r_squared)),
        )
        .unwrap();
    }
    files.push(("summary.txt".into(), summary));
    files
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> ExperimentConfig {
        ExperimentConfig::parse(
            "[grid]\nrows = [\"NTG\", \"SNN\"]\n[experts]\npermutations = [[0,1,2,3],[2,3,0,1]]\n[run]\nrounds = 50\nrepetitions = 3\n",
        )
        .unwrap()
    }

    #[test]
    fn moments_of_identical_values_are_exact() {
        let mut m = Moments::default();
        for _ in 0..7 {
            m.push(0.1);
        }
        assert_eq!(m.mean, 0.1);
        assert_eq!(m.sd(), 0.0);
    }

    #[test]
    fn aggregate_shapes_and_envelope() {
        let config = small_config();
        let (_, exp) = run_experiment(&config).unwrap();
        let agg = &exp.aggregate;
        assert_eq!(agg.rounds(), 50);
        assert_eq!(exp.traces.len(), 3);
        for i in 0..50 {
            let vals: Vec<f64> = exp.series.iter().map(|s| s.cumulative_regret[i]).collect();
            let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            assert!(agg.mean_regret[i] >= lo - 1e-9 && agg.mean_regret[i] <= hi + 1e-9);
            assert!((agg.mean_fractions[i].iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let csv = trace_csv(&exp.traces, &exp.series);
        assert_eq!(csv.lines().count(), 1 + 3 * 50);
        assert_eq!(aggregate_csv(agg).lines().count(), 1 + 50);
    }

    #[test]
    fn single_repetition_aggregate_is_the_trace() {
        let mut config = small_config();
        config.run.repetitions = 1;
        let (_, exp) = run_experiment(&config).unwrap();
        assert_eq!(exp.aggregate.mean_regret, exp.series[0].cumulative_regret);
        assert_eq!(exp.aggregate.mean_avg_cum_reward, exp.series[0].avg_cumulative_reward);
        assert!(exp.aggregate.sd_regret.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn failed_write_leaves_nothing_behind() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("out");
        // the second file's parent is a regular file, so its write fails
        let files = vec![
            (PathBuf::from("a.txt"), "x".to_string()),
            (PathBuf::from("a.txt/b.txt"), "y".to_string()),
        ];
        assert!(write_outputs(&dir, &files).is_err());
        assert!(!dir.exists());
    }
}
