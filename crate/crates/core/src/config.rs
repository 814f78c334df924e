//! Experiment configuration: a TOML file with one table per concern.
//!
//! Every key has a default, so an empty file is a valid configuration of
//! the built-in gridworld experiment. Unknown keys are rejected.
//! [`reference_config`] prints the defaults with a comment per key.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::controller::{DeltaSchedule, EpisodeSchedule, SelectorSpec, TieBreak};
use crate::error::{Error, Result};
use crate::gridworld::{ActionPermutation, GridDynamicsParams, GridLayout, NUM_DIRECTIONS};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub grid: GridConfig,
    pub experts: ExpertsConfig,
    pub observation: ObservationConfig,
    pub schedule: ScheduleConfig,
    pub delta: DeltaConfig,
    pub run: RunSection,
    /// Directory that relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// Layout file with one S/N/G/Y/T row per line.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub layout: Option<PathBuf>,
    /// Inline layout rows; mutually exclusive with `layout`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rows: Option<Vec<String>>,
    pub p_intended: f64,
    pub p_trap_escape: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExpertsConfig {
    /// One believed-action permutation per expert.
    pub permutations: Vec<Vec<usize>>,
    /// Optional corruption level each expert is trained under.
    pub training_noise: Vec<f64>,
    pub discount: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObservationKind {
    Identity,
    Corruption,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObservationConfig {
    pub kind: ObservationKind,
    pub epsilon: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub t0: u64,
    pub growth: f64,
    /// `T0` values visited by `sweep`.
    pub sweep: Vec<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeltaKind {
    Polynomial,
    Fixed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeltaConfig {
    pub kind: DeltaKind,
    pub alpha: f64,
    pub value: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TieBreakKind {
    Lowest,
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub rounds: u64,
    pub repetitions: usize,
    pub base_seed: u64,
    pub selector: String,
    pub tie_break: TieBreakKind,
    pub output: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            grid: GridConfig::default(),
            experts: ExpertsConfig::default(),
            observation: ObservationConfig::default(),
            schedule: ScheduleConfig::default(),
            delta: DeltaConfig::default(),
            run: RunSection::default(),
            base_dir: PathBuf::new(),
        }
    }
}

impl Default for GridConfig {
    fn default() -> Self {
        let params = GridDynamicsParams::default();
        Self {
            layout: None,
            rows: None,
            p_intended: params.p_intended,
            p_trap_escape: params.p_trap_escape,
        }
    }
}

impl Default for ExpertsConfig {
    fn default() -> Self {
        Self {
            permutations: ActionPermutation::default_set()
                .iter()
                .map(|p| p.as_slice().to_vec())
                .collect(),
            training_noise: Vec::new(),
            discount: crate::experts::DEFAULT_DISCOUNT,
            tolerance: crate::experts::DEFAULT_TOL,
            max_iterations: crate::experts::DEFAULT_MAX_ITER,
        }
    }
}

impl Default for ObservationConfig {
    fn default() -> Self {
        Self {
            kind: ObservationKind::Identity,
            epsilon: 0.0,
        }
    }
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            t0: 4,
            growth: 0.1,
            sweep: vec![4, 10, 20, 40],
        }
    }
}

impl Default for DeltaConfig {
    fn default() -> Self {
        Self {
            kind: DeltaKind::Polynomial,
            alpha: 4.0,
            value: 0.05,
        }
    }
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            rounds: 3000,
            repetitions: 10,
            base_seed: 0,
            selector: "ucb".into(),
            tie_break: TieBreakKind::Lowest,
            output: PathBuf::from("out"),
        }
    }
}

fn invalid(field: &str, constraint: impl std::fmt::Display) -> Error {
    Error::Config(format!("{field}: {constraint}"))
}

impl ExperimentConfig {
    /// Parses TOML text. Syntax and type errors carry the line and column.
    pub fn parse(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| {
            let location = e
                .span()
                .map(|span| {
                    let before = &text[..span.start.min(text.len())];
                    let line = before.matches('\n').count() + 1;
                    let col = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
                    format!("line {line}, column {col}: ")
                })
                .unwrap_or_default();
            Error::Config(format!("{location}{}", e.message()))
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn num_experts(&self) -> usize {
        self.experts.permutations.len()
    }

    /// Checks every constraint that does not need the layout file.
    pub fn validate(&self) -> Result<()> {
        let g = &self.grid;
        if g.layout.is_some() && g.rows.is_some() {
            return Err(invalid("grid", "set either layout or rows, not both"));
        }
        if let Some(rows) = &g.rows {
            GridLayout::from_rows(rows).map_err(|e| invalid("grid.rows", e))?;
        }
        self.dynamics().validate().map_err(|e| invalid("grid", e))?;

        let e = &self.experts;
        if e.permutations.is_empty() {
            return Err(invalid("experts.permutations", "at least one expert is required"));
        }
        for (i, p) in e.permutations.iter().enumerate() {
            let field = format!("experts.permutations[{i}]");
            if p.len() != NUM_DIRECTIONS {
                return Err(invalid(&field, format!("needs {NUM_DIRECTIONS} entries, got {}", p.len())));
            }
            ActionPermutation::new(p.clone()).map_err(|_| invalid(&field, format!("{p:?} is not a bijection")))?;
        }
        if !e.training_noise.is_empty() && e.training_noise.len() != e.permutations.len() {
            return Err(invalid(
                "experts.training_noise",
                format!(
                    "needs one value per expert ({}), got {}",
                    e.permutations.len(),
                    e.training_noise.len()
                ),
            ));
        }
        for (i, &eps) in e.training_noise.iter().enumerate() {
            if !(0.0..=1.0).contains(&eps) {
                return Err(invalid(&format!("experts.training_noise[{i}]"), format!("must lie in [0,1], got {eps}")));
            }
        }
        if !(0.0..1.0).contains(&e.discount) {
            return Err(invalid("experts.discount", format!("must lie in [0,1), got {}", e.discount)));
        }
        if !(e.tolerance > 0.0) {
            return Err(invalid("experts.tolerance", format!("must be positive, got {}", e.tolerance)));
        }
        if e.max_iterations == 0 {
            return Err(invalid("experts.max_iterations", "must be ≥ 1"));
        }

        let o = &self.observation;
        if !(0.0..=1.0).contains(&o.epsilon) {
            return Err(invalid("observation.epsilon", format!("must lie in [0,1], got {}", o.epsilon)));
        }
        if o.kind == ObservationKind::Identity && o.epsilon != 0.0 {
            return Err(invalid("observation.epsilon", "only used with kind = \"corruption\""));
        }

        self.episode_schedule(self.schedule.t0).map_err(|e| invalid("schedule.t0", e))?;
        if self.schedule.sweep.contains(&0) {
            return Err(invalid("schedule.sweep", "t0 must be ≥ 1"));
        }
        self.deltas().validate().map_err(|e| invalid("delta", e))?;

        let r = &self.run;
        if r.repetitions == 0 {
            return Err(invalid("run.repetitions", "must be ≥ 1"));
        }
        if (r.rounds as usize) < self.num_experts() {
            return Err(invalid(
                "run.rounds",
                format!("must be ≥ the number of experts ({}), got {}", self.num_experts(), r.rounds),
            ));
        }
        self.selector()?;
        Ok(())
    }

    pub fn dynamics(&self) -> GridDynamicsParams {
        GridDynamicsParams {
            p_intended: self.grid.p_intended,
            p_trap_escape: self.grid.p_trap_escape,
        }
    }

    /// The configured layout: inline rows, a file relative to the config,
    /// or the built-in default.
    pub fn layout(&self) -> Result<GridLayout> {
        if let Some(rows) = &self.grid.rows {
            return GridLayout::from_rows(rows);
        }
        match &self.grid.layout {
            Some(path) => {
                let path = self.resolve(path);
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| invalid("grid.layout", format!("cannot read {}: {e}", path.display())))?;
                text.parse().map_err(|e| invalid("grid.layout", e))
            }
            None => Ok(GridLayout::default_layout()),
        }
    }

    pub fn permutations(&self) -> Vec<ActionPermutation> {
        self.experts
            .permutations
            .iter()
            .map(|p| ActionPermutation::new(p.clone()).expect("validated"))
            .collect()
    }

    pub fn episode_schedule(&self, t0: u64) -> Result<EpisodeSchedule> {
        EpisodeSchedule::new(t0, self.schedule.growth)
    }

    pub fn deltas(&self) -> DeltaSchedule {
        match self.delta.kind {
            DeltaKind::Polynomial => DeltaSchedule::Polynomial { alpha: self.delta.alpha },
            DeltaKind::Fixed => DeltaSchedule::Fixed(self.delta.value),
        }
    }

    pub fn selector(&self) -> Result<SelectorSpec> {
        let spec: SelectorSpec = self.run.selector.parse().map_err(|e| invalid("run.selector", e))?;
        if let SelectorSpec::Fixed(e) = spec {
            if e >= self.num_experts() {
                return Err(invalid(
                    "run.selector",
                    format!("fixed expert {e} out of range ({} experts)", self.num_experts()),
                ));
            }
        }
        if let SelectorSpec::EpsilonGreedy(eps) = spec {
            if !(0.0..=1.0).contains(&eps) {
                return Err(invalid("run.selector", format!("epsilon must lie in [0,1], got {eps}")));
            }
        }
        Ok(spec)
    }

    pub fn tie_break(&self, seed: u64) -> TieBreak {
        match self.run.tie_break {
            TieBreakKind::Lowest => TieBreak::Lowest,
            // offset so the tie stream never coincides with the run stream
            TieBreakKind::Random => TieBreak::Random(seed ^ 0x9e37_79b9_7f4a_7c15),
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.run.output)
    }

    fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Reads and validates a config file; relative paths inside it resolve
/// against the file's directory.
pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("cannot read {}: {e}", path.display()))))?;
    let mut config = ExperimentConfig::parse(&text)
        .map_err(|e| Error::Config(format!("{}: {}", path.display(), strip_prefix(e))))?;
    config.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(config)
}

fn strip_prefix(e: Error) -> String {
    match e {
        Error::Config(msg) => msg,
        other => other.to_string(),
    }
}

/// The default configuration, annotated.
pub fn reference_config() -> String {
    let d = ExperimentConfig::default();
    let perms: Vec<String> = d.experts.permutations.iter().map(|p| format!("{p:?}")).collect();
    format!(
        r#"# Reference configuration. Every key is optional; the values shown are
# the defaults. Unknown keys are rejected.

[grid]
# Layout file (one row of S/N/G/Y/T per line, relative to this file) or
# inline rows; at most one of the two. Without either, the built-in 5x5
# layout is used.
# layout = "grid.txt"
# rows = ["TNNGG", "YTNNN", "YNTNN", "NNNTN", "SNNNN"]
# probability of moving in the chosen direction from a non-trap tile
p_intended = {p_intended:?}
# probability of leaving a trap tile
p_trap_escape = {p_trap_escape:?}

[experts]
# one believed-action permutation per expert: nominal action a moves in
# direction permutations[e][a] (0 up, 1 right, 2 down, 3 left)
permutations = [{perms}]
# optional corruption level each expert is trained under, one per expert
training_noise = []
discount = {discount:?}
tolerance = {tolerance:e}
max_iterations = {max_iterations}

[observation]
# "identity" or "corruption" (true state with probability 1 - epsilon,
# otherwise a uniformly random state)
kind = "identity"
epsilon = 0.0

[schedule]
# episode n runs ceil(t0 + growth * n) steps
t0 = {t0}
growth = {growth:?}
# t0 values visited by the sweep subcommand
sweep = {sweep:?}

[delta]
# "polynomial": delta(n) = max(n, 2)^-alpha over completed rounds n
# "fixed": delta = value in every round
kind = "polynomial"
alpha = {alpha:?}
value = {value:?}

[run]
rounds = {rounds}
repetitions = {repetitions}
# repetition r uses seed base_seed + r
base_seed = {base_seed}
# ucb | oracle | uniform | fixed(E) | epsilon_greedy(EPS)
selector = "{selector}"
# "lowest" index or "random" among tied UCB indices
tie_break = "lowest"
output = "{output}"
"#,
        p_intended = d.grid.p_intended,
        p_trap_escape = d.grid.p_trap_escape,
        perms = perms.join(", "),
        discount = d.experts.discount,
        tolerance = d.experts.tolerance,
        max_iterations = d.experts.max_iterations,
        t0 = d.schedule.t0,
        growth = d.schedule.growth,
        sweep = d.schedule.sweep,
        alpha = d.delta.alpha,
        value = d.delta.value,
        rounds = d.run.rounds,
        repetitions = d.run.repetitions,
        base_seed = d.run.base_seed,
        selector = d.run.selector,
        output = d.run.output.display(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = ExperimentConfig::parse("").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        assert_eq!(c.schedule.growth, 0.1);
        assert_eq!(c.deltas(), DeltaSchedule::Polynomial { alpha: 4.0 });
        assert_eq!(c.run.repetitions, 10);
    }

    #[test]
    fn reference_round_trips_to_defaults() {
        assert_eq!(ExperimentConfig::parse(&reference_config()).unwrap(), ExperimentConfig::default());
        let again = ExperimentConfig::parse(&ExperimentConfig::default().to_toml()).unwrap();
        assert_eq!(again, ExperimentConfig::default());
    }

    #[test]
    fn rejects_zero_t0() {
        let err = ExperimentConfig::parse("[schedule]\nt0 = 0\n").unwrap_err().to_string();
        assert!(err.contains("schedule.t0") && err.contains("t0 must be ≥ 1"), "{err}");
    }

    #[test]
    fn rejects_non_bijection() {
        let err = ExperimentConfig::parse("[experts]\npermutations = [[0, 0, 1, 2]]\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("experts.permutations[0]") && err.contains("not a bijection"), "{err}");
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = ExperimentConfig::parse("[run]\nround = 5\n").unwrap_err().to_string();
        assert!(err.contains("round") && err.contains("line 2"), "{err}");
        let err = ExperimentConfig::parse("[runs]\n").unwrap_err().to_string();
        assert!(err.contains("runs"), "{err}");
    }

    #[test]
    fn syntax_errors_carry_line() {
        let err = ExperimentConfig::parse("[run]\nrounds = 10\nrepetitions = \"x\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("line 3"), "{err}");
    }

    #[test]
    fn cross_field_checks() {
        for (text, needle) in [
            ("[run]\nrounds = 3\n", "run.rounds"),
            ("[run]\nrepetitions = 0\n", "run.repetitions"),
            ("[run]\nselector = \"fixed(4)\"\n", "run.selector"),
            ("[run]\nselector = \"greedy\"\n", "run.selector"),
            ("[experts]\ntraining_noise = [0.1]\n", "experts.training_noise"),
            ("[experts]\npermutations = [[0, 1, 2]]\n", "experts.permutations[0]"),
            ("[observation]\nepsilon = 0.2\n", "observation.epsilon"),
            ("[grid]\nlayout = \"a.txt\"\nrows = [\"S\"]\n", "grid"),
            ("[grid]\nrows = [\"SS\"]\n", "grid.rows"),
            ("[grid]\np_intended = 1.5\n", "grid"),
            ("[delta]\nkind = \"fixed\"\nvalue = 1.5\n", "delta"),
            ("[schedule]\nsweep = [4, 0]\n", "schedule.sweep"),
        ] {
            let err = ExperimentConfig::parse(text).unwrap_err().to_string();
            assert!(err.contains(needle), "{text:?} -> {err}");
        }
    }

    #[test]
    fn inline_rows_and_overrides() {
        let c = ExperimentConfig::parse(
            "[grid]\nrows = [\"SNG\"]\n[observation]\nkind = \"corruption\"\nepsilon = 0.3\n[run]\nselector = \"fixed(1)\"\n",
        )
        .unwrap();
        assert_eq!(c.layout().unwrap().num_states(), 3);
        assert_eq!(c.selector().unwrap(), SelectorSpec::Fixed(1));
    }
}
