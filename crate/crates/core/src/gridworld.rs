//! Gridworld construction from a tile layout, action relabelling for expert
//! training, and uniform observation-corruption kernels.
//!
//! Actions are numbered `0 = up, 1 = right, 2 = down, 3 = left`. State
//! indices are row-major: `row * cols + col`, row 0 at the top.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::mdp::{Mdp, ObservationKernel};

/// The default layout shipped with the crate.
pub const DEFAULT_LAYOUT: &str = include_str!("../data/default_grid.txt");

pub const NUM_DIRECTIONS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Up = 0,
    Right = 1,
    Down = 2,
    Left = 3,
}

impl Direction {
    pub const ALL: [Direction; NUM_DIRECTIONS] =
        [Direction::Up, Direction::Right, Direction::Down, Direction::Left];

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    fn delta(self) -> (isize, isize) {
        match self {
            Direction::Up => (-1, 0),
            Direction::Right => (0, 1),
            Direction::Down => (1, 0),
            Direction::Left => (0, -1),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Tile {
    Start,
    Normal,
    Goal,
    Gray,
    Trap,
}

impl Tile {
    pub fn from_char(c: char) -> Option<Self> {
        match c {
            'S' => Some(Tile::Start),
            'N' => Some(Tile::Normal),
            'G' => Some(Tile::Goal),
            'Y' => Some(Tile::Gray),
            'T' => Some(Tile::Trap),
            _ => None,
        }
    }

    pub fn to_char(self) -> char {
        match self {
            Tile::Start => 'S',
            Tile::Normal => 'N',
            Tile::Goal => 'G',
            Tile::Gray => 'Y',
            Tile::Trap => 'T',
        }
    }

    /// Reward collected on entering a tile of this kind.
    pub fn entry_reward(self) -> f64 {
        match self {
            Tile::Goal => 1.0,
            Tile::Gray => 0.1,
            Tile::Trap | Tile::Normal | Tile::Start => 0.0,
        }
    }
}

/// A rectangular grid of tiles with exactly one start tile.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GridLayout {
    rows: usize,
    cols: usize,
    tiles: Vec<Tile>,
}

impl GridLayout {
    pub fn new(rows: usize, cols: usize, tiles: Vec<Tile>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Layout("grid is empty".into()));
        }
        if tiles.len() != rows * cols {
            return Err(Error::Layout(format!(
                "{} tiles for a {rows}x{cols} grid",
                tiles.len()
            )));
        }
        let starts = tiles.iter().filter(|&&t| t == Tile::Start).count();
        if starts != 1 {
            return Err(Error::Layout(format!(
                "expected exactly one Start tile, found {starts}"
            )));
        }
        Ok(Self { rows, cols, tiles })
    }

    /// Parses row strings over `S/N/G/Y/T`. Blank lines and surrounding
    /// whitespace are ignored.
    pub fn from_rows<S: AsRef<str>>(rows: &[S]) -> Result<Self> {
        let mut tiles = Vec::new();
        let mut cols = None;
        let mut nrows = 0;
        for (lineno, line) in rows.iter().map(AsRef::as_ref).map(str::trim).enumerate() {
            if line.is_empty() {
                continue;
            }
            let before = tiles.len();
            for c in line.chars() {
                let tile = Tile::from_char(c).ok_or_else(|| {
                    Error::Layout(format!("unknown tile '{c}' on line {}", lineno + 1))
                })?;
                tiles.push(tile);
            }
            let width = tiles.len() - before;
            match cols {
                None => cols = Some(width),
                Some(w) if w != width => {
                    return Err(Error::Layout(format!(
                        "grid is not rectangular: line {} has {width} tiles, expected {w}",
                        lineno + 1
                    )))
                }
                _ => {}
            }
            nrows += 1;
        }
        Self::new(nrows, cols.unwrap_or(0), tiles)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        std::fs::read_to_string(path)?.parse()
    }

    pub fn default_layout() -> Self {
        DEFAULT_LAYOUT.parse().expect("shipped layout is valid")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn num_states(&self) -> usize {
        self.rows * self.cols
    }

    pub fn tiles(&self) -> &[Tile] {
        &self.tiles
    }

    pub fn tile(&self, state: usize) -> Tile {
        self.tiles[state]
    }

    pub fn state_of(&self, row: usize, col: usize) -> usize {
        row * self.cols + col
    }

    pub fn coords(&self, state: usize) -> (usize, usize) {
        (state / self.cols, state % self.cols)
    }

    pub fn start_state(&self) -> usize {
        self.tiles
            .iter()
            .position(|&t| t == Tile::Start)
            .expect("layout has a start tile")
    }

    /// The neighbour of `state` in direction `dir`, or `None` off-grid.
    pub fn neighbor(&self, state: usize, dir: Direction) -> Option<usize> {
        let (r, c) = self.coords(state);
        let (dr, dc) = dir.delta();
        let nr = r.checked_add_signed(dr)?;
        let nc = c.checked_add_signed(dc)?;
        (nr < self.rows && nc < self.cols).then(|| self.state_of(nr, nc))
    }

    pub fn to_rows(&self) -> Vec<String> {
        self.tiles
            .chunks(self.cols)
            .map(|row| row.iter().map(|t| t.to_char()).collect())
            .collect()
    }
}

impl FromStr for GridLayout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lines: Vec<&str> = s.lines().collect();
        Self::from_rows(&lines)
    }
}

impl fmt::Display for GridLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for row in self.to_rows() {
            writeln!(f, "{row}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridDynamicsParams {
    /// Probability of moving in the chosen direction from a non-trap tile.
    pub p_intended: f64,
    /// Probability of leaving a trap tile (in the chosen direction).
    pub p_trap_escape: f64,
}

impl Default for GridDynamicsParams {
    fn default() -> Self {
        Self {
            p_intended: 0.97,
            p_trap_escape: 0.02,
        }
    }
}

impl GridDynamicsParams {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("p_intended", self.p_intended),
            ("p_trap_escape", self.p_trap_escape),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidParameter(format!("{name} must lie in [0,1], got {p}")));
            }
        }
        Ok(())
    }
}

/// Builds the gridworld MDP.
///
/// From a non-trap tile the chosen direction is taken with `p_intended` and
/// each other direction with `(1 - p_intended) / 3`. From a trap tile the
/// agent stays with `1 - p_trap_escape` and otherwise moves in the chosen
/// direction. Mass on a direction that would leave the grid is spread
/// uniformly over the directions that stay in the grid. Rewards depend on
/// the entered tile only; the initial distribution is a point mass on the
/// start tile. The discount is set to `discount`.
pub fn build_gridworld(layout: &GridLayout, params: GridDynamicsParams, discount: f64) -> Result<Mdp> {
    params.validate()?;
    let n = layout.num_states();
    let mut transitions = vec![0.0; NUM_DIRECTIONS * n * n];
    let mut rewards = vec![0.0; NUM_DIRECTIONS * n * n];

    for s in 0..n {
        let in_grid: Vec<usize> = Direction::ALL
            .iter()
            .filter_map(|&d| layout.neighbor(s, d))
            .collect();
        let trap = layout.tile(s) == Tile::Trap;
        for a in 0..NUM_DIRECTIONS {
            let row = &mut transitions[(a * n + s) * n..(a * n + s + 1) * n];
            let mut move_weights = [0.0; NUM_DIRECTIONS];
            if trap {
                row[s] += 1.0 - params.p_trap_escape;
                move_weights[a] = params.p_trap_escape;
            } else {
                let slip = (1.0 - params.p_intended) / 3.0;
                for (d, w) in move_weights.iter_mut().enumerate() {
                    *w = if d == a { params.p_intended } else { slip };
                }
            }
            for (d, &w) in move_weights.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                match layout.neighbor(s, Direction::ALL[d]) {
                    Some(next) => row[next] += w,
                    None if in_grid.is_empty() => row[s] += w,
                    None => {
                        let share = w / in_grid.len() as f64;
                        for &next in &in_grid {
                            row[next] += share;
                        }
                    }
                }
            }
            let rrow = &mut rewards[(a * n + s) * n..(a * n + s + 1) * n];
            for (next, r) in rrow.iter_mut().enumerate() {
                *r = layout.tile(next).entry_reward();
            }
        }
    }

    let mut initial = vec![0.0; n];
    initial[layout.start_state()] = 1.0;
    Mdp::new(n, NUM_DIRECTIONS, transitions, rewards, discount, initial)
}

/// A bijection from nominal action labels to the true actions they are
/// believed to trigger.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActionPermutation {
    perm: Vec<usize>,
}

impl ActionPermutation {
    pub fn new(perm: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; perm.len()];
        for &p in &perm {
            if p >= perm.len() || std::mem::replace(&mut seen[p], true) {
                return Err(Error::InvalidParameter(format!(
                    "permutation {perm:?} is not a bijection"
                )));
            }
        }
        Ok(Self { perm })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            perm: (0..n).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    pub fn apply(&self, action: usize) -> usize {
        self.perm[action]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.perm
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.perm.len()];
        for (a, &p) in self.perm.iter().enumerate() {
            inv[p] = a;
        }
        Self { perm: inv }
    }

    /// The four default believed-dynamics relabellings, in expert order:
    /// identity, left/right swapped, rotated by two (nominal 2 is up), and
    /// up/down swapped (nominal 2 is up, left and right kept).
    pub fn default_set() -> Vec<Self> {
        [[0, 1, 2, 3], [0, 3, 2, 1], [2, 3, 0, 1], [2, 1, 0, 3]]
            .into_iter()
            .map(|p| Self { perm: p.to_vec() })
            .collect()
    }
}

/// The MDP in which nominal action `a` behaves like `perm(a)` in `mdp`.
pub fn permute_actions(mdp: &Mdp, perm: &ActionPermutation) -> Result<Mdp> {
    if perm.len() != mdp.num_actions() {
        return Err(Error::Dimension(format!(
            "permutation over {} actions applied to an MDP with {}",
            perm.len(),
            mdp.num_actions()
        )));
    }
    let n = mdp.num_states();
    let block = n * n;
    let mut transitions = Vec::with_capacity(block * perm.len());
    let mut rewards = Vec::with_capacity(block * perm.len());
    for a in 0..perm.len() {
        let src = perm.apply(a) * block;
        transitions.extend_from_slice(&mdp.transitions_raw()[src..src + block]);
        rewards.extend_from_slice(&mdp.rewards_raw()[src..src + block]);
    }
    Mdp::from_parts(
        n,
        mdp.num_actions(),
        transitions,
        rewards,
        mdp.discount(),
        mdp.initial_dist().to_vec(),
    )
}

/// Observation kernel that reports the true state with probability
/// `1 - epsilon` and a uniformly random state otherwise.
pub fn corruption_kernel(num_states: usize, epsilon: f64) -> Result<ObservationKernel> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::InvalidParameter(format!(
            "corruption epsilon must lie in [0,1], got {epsilon}"
        )));
    }
    if num_states == 0 {
        return Err(Error::Dimension("kernel needs at least one state".into()));
    }
    let off = epsilon / num_states as f64;
    let mut emission = vec![off; num_states * num_states];
    for s in 0..num_states {
        emission[s * num_states + s] = 1.0 - epsilon + off;
    }
    ObservationKernel::new(num_states, num_states, emission)
}
