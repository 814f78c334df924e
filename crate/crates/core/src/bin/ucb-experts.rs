use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use ucb_experts::config::{load_config, reference_config, ExperimentConfig};
use ucb_experts::controller::SelectorSpec;
use ucb_experts::harness::{
    analysis_table, build_scenario, configured_t0s, experiment_files, run_experiment, sweep, sweep_files,
    write_outputs,
};
use ucb_experts::Error;

/// Online expert selection in MDPs with upper confidence bounds.
#[derive(Parser)]
#[command(name = "ucb-experts", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Analyse every expert's induced chain and print the table.
    Analyze(Opts),
    /// Run the configured experiment.
    Run(Opts),
    /// Run the experiment once per T0 value.
    Sweep(Opts),
    /// Run a non-UCB selector (oracle unless --selector is given).
    Baseline(Opts),
    /// Print the annotated default configuration.
    PrintDefaultConfig,
}

#[derive(Args)]
struct Opts {
    /// TOML config file; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides run.output).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Base seed; repetition r uses seed + r.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of repetitions.
    #[arg(long)]
    reps: Option<usize>,
    /// Rounds per repetition.
    #[arg(long)]
    rounds: Option<u64>,
    /// Comma-separated T0 values (one value for run/baseline).
    #[arg(long, value_delimiter = ',')]
    t0: Option<Vec<u64>>,
    /// ucb | oracle | uniform | fixed(E) | epsilon_greedy(EPS)
    #[arg(long)]
    selector: Option<String>,
}

impl Opts {
    fn config(&self) -> anyhow::Result<ExperimentConfig> {
        let mut config = match &self.config {
            Some(path) => load_config(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(out) = &self.out {
            config.run.output = std::env::current_dir()?.join(out);
        }
        if let Some(seed) = self.seed {
            config.run.base_seed = seed;
        }
        if let Some(reps) = self.reps {
            config.run.repetitions = reps;
        }
        if let Some(rounds) = self.rounds {
            config.run.rounds = rounds;
        }
        if let Some(selector) = &self.selector {
            config.run.selector = selector.clone();
        }
        config.validate()?;
        Ok(config)
    }

    fn single_t0(&self, config: &mut ExperimentConfig) -> anyhow::Result<()> {
        match self.t0.as_deref() {
            None => {}
            Some([t0]) => config.schedule.t0 = *t0,
            Some(list) => bail!(Error::Config(format!("--t0 takes one value here, got {}", list.len()))),
        }
        config.validate()?;
        Ok(())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let (category, code) = categorize(&err);
            eprintln!("error[{category}]: {err:#}");
            ExitCode::from(code)
        }
    }
}

fn categorize(err: &anyhow::Error) -> (&'static str, u8) {
    if err.chain().any(|e| e.downcast_ref::<std::io::Error>().is_some()) {
        return ("io", 4);
    }
    match err.chain().find_map(|e| e.downcast_ref::<Error>()) {
        Some(Error::Io(_)) => ("io", 4),
        Some(Error::Config(_) | Error::InvalidParameter(_) | Error::Layout(_) | Error::IndexOutOfRange { .. }) => {
            ("config", 3)
        }
        Some(Error::InvalidModel(_) | Error::Dimension(_) | Error::NotErgodic(_) | Error::NoConvergence { .. }) => {
            ("model", 5)
        }
        None => ("internal", 1),
    }
}

fn execute(command: Command) -> anyhow::Result<()> {
    match command {
        Command::PrintDefaultConfig => print!("{}", reference_config()),
        Command::Analyze(opts) => {
            let config = opts.config()?;
            let t0s = opts.t0.clone().unwrap_or_else(|| configured_t0s(&config));
            if t0s.contains(&0) {
                bail!(Error::Config("--t0: t0 must be ≥ 1".into()));
            }
            let scenario = build_scenario(&config)?;
            let table = analysis_table(&scenario, &config, &t0s);
            print!("{table}");
            let out = config.output_dir();
            write_outputs(&out, &[("analysis.csv".into(), table.to_csv())])
                .with_context(|| format!("writing {}", out.display()))?;
        }
        Command::Run(opts) => {
            let mut config = opts.config()?;
            opts.single_t0(&mut config)?;
            run_and_write(&config)?;
        }
        Command::Baseline(opts) => {
            let mut config = opts.config()?;
            opts.single_t0(&mut config)?;
            if config.selector()? == SelectorSpec::Ucb {
                if opts.selector.is_some() {
                    bail!(Error::Config("baseline needs a non-UCB selector".into()));
                }
                config.run.selector = SelectorSpec::Oracle.to_string();
            }
            run_and_write(&config)?;
        }
        Command::Sweep(opts) => {
            let config = opts.config()?;
            let t0s = opts.t0.clone().unwrap_or_else(|| config.schedule.sweep.clone());
            if t0s.contains(&0) {
                bail!(Error::Config("--t0: t0 must be ≥ 1".into()));
            }
            let (scenario, runs) = sweep(&config, &t0s)?;
            let table = analysis_table(&scenario, &config, &t0s);
            let files = sweep_files(&config, &table, &runs);
            let out = config.output_dir();
            write_outputs(&out, &files).with_context(|| format!("writing {}", out.display()))?;
            print!("{}", files.last().map(|f| f.1.as_str()).unwrap_or_default());
        }
    }
    Ok(())
}

fn run_and_write(config: &ExperimentConfig) -> anyhow::Result<()> {
    let (scenario, experiment) = run_experiment(config)?;
    let table = analysis_table(&scenario, config, &[config.schedule.t0]);
    let files = experiment_files(config, &table, &experiment);
    let out = config.output_dir();
    write_outputs(&out, &files).with_context(|| format!("writing {}", out.display()))?;
    print!("{}", files.last().map(|f| f.1.as_str()).unwrap_or_default());
    Ok(())
}
