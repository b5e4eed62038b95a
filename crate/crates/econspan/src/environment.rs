//! Material/span gridworld.
//!
//! States form a `rows x columns` grid: each row is one load-bearing
//! material, each column a span on a regular grid (10 m steps by
//! default, 80 columns). The agent moves one cell at a time; moves that
//! would leave the grid are clamped (the coordinate is kept). Every step
//! is rewarded with the negative unit-area cost of the post-move cell,
//! so return maximization drives the agent toward the cheapest
//! material/span cell. Episodes end only on a step budget.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::cost_model::{self, MaterialCostParams};
use crate::image::{self, ImageBuffer};

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("invalid environment config: {0}")]
    InvalidConfig(String),
    #[error("state index {index} out of range (0..{count})")]
    IndexOutOfRange { index: usize, count: usize },
    #[error("row {row} or span {span} off the grid")]
    OffGrid { row: usize, span: u32 },
    #[error("episode already finished; call reset")]
    EpisodeFinished,
    #[error("trajectory trace is empty")]
    EmptyTrace,
}

/// Grid geometry, episode budget and the material rows.
#[derive(Debug, Clone)]
pub struct EnvConfig {
    pub min_span: u32,
    pub max_span: u32,
    pub step_length: u32,
    pub max_steps: u32,
    pub cell_pixels: usize,
    pub materials: Vec<MaterialCostParams>,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            min_span: 10,
            max_span: 800,
            step_length: 10,
            max_steps: 200,
            cell_pixels: 16,
            materials: MaterialCostParams::builtin_materials(),
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |msg: String| Err(EnvError::InvalidConfig(msg));
        if self.min_span == 0 {
            return bad("min_span must be positive".into());
        }
        if self.step_length == 0 {
            return bad("step_length must be positive".into());
        }
        if self.max_span <= self.min_span {
            return bad(format!(
                "max_span {} must exceed min_span {}",
                self.max_span, self.min_span
            ));
        }
        if (self.max_span - self.min_span) % self.step_length != 0 {
            return bad(format!(
                "span range {}..{} not divisible by step_length {}",
                self.min_span, self.max_span, self.step_length
            ));
        }
        if self.max_steps == 0 {
            return bad("max_steps must be positive".into());
        }
        if self.cell_pixels == 0 {
            return bad("cell_pixels must be at least 1".into());
        }
        if self.materials.is_empty() {
            return bad("at least one material row is required".into());
        }
        for m in &self.materials {
            m.validate()
                .map_err(|e| EnvError::InvalidConfig(e.to_string()))?;
        }
        Ok(())
    }

    pub fn num_rows(&self) -> usize {
        self.materials.len()
    }

    pub fn num_columns(&self) -> usize {
        ((self.max_span - self.min_span) / self.step_length) as usize + 1
    }

    pub fn num_states(&self) -> usize {
        self.num_rows() * self.num_columns()
    }
}

/// One cell of the grid, identified by its flat state index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridState {
    index: usize,
}

impl GridState {
    pub fn index(&self) -> usize {
        self.index
    }
}

/// The five moves; codes are part of the MDP contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Action {
    Noop = 0,
    Up = 1,
    Down = 2,
    Left = 3,
    Right = 4,
}

pub const ALL_ACTIONS: [Action; 5] = [
    Action::Noop,
    Action::Up,
    Action::Down,
    Action::Left,
    Action::Right,
];

impl Action {
    pub fn code(&self) -> u8 {
        *self as u8
    }

    pub fn from_code(code: u8) -> Option<Action> {
        ALL_ACTIONS.get(code as usize).copied()
    }

    /// Displacement as (delta row, delta span in meters).
    pub fn displacement(&self, step_length: u32) -> (i64, i64) {
        let s = step_length as i64;
        match self {
            Action::Noop => (0, 0),
            Action::Up => (-1, 0),
            Action::Down => (1, 0),
            Action::Left => (0, -s),
            Action::Right => (0, s),
        }
    }
}

/// Row and span of the cell the agent occupies after a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepInfo {
    pub row: usize,
    pub span: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResult {
    pub next_state: GridState,
    pub reward: f64,
    pub done: bool,
    pub truncated: bool,
    pub info: StepInfo,
}

/// Ordered list of visited states; first entry is the start, last the
/// endpoint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpisodeTrace {
    pub states: Vec<GridState>,
}

impl EpisodeTrace {
    pub fn new(states: Vec<GridState>) -> Self {
        Self { states }
    }

    pub fn start(&self) -> Option<GridState> {
        self.states.first().copied()
    }

    pub fn endpoint(&self) -> Option<GridState> {
        self.states.last().copied()
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// The gridworld itself: one mutable episode plus pure helpers over the
/// grid (dynamics, costs, rendering).
#[derive(Debug, Clone)]
pub struct BridgeEnv {
    config: EnvConfig,
    state: GridState,
    step_num: u32,
    done: bool,
    rng: ChaCha8Rng,
}

impl BridgeEnv {
    pub fn new(config: EnvConfig) -> Result<Self, EnvError> {
        config.validate()?;
        Ok(Self {
            config,
            state: GridState { index: 0 },
            step_num: 0,
            done: false,
            rng: ChaCha8Rng::seed_from_u64(0),
        })
    }

    pub fn with_defaults() -> Self {
        Self::new(EnvConfig::default()).expect("default config is valid")
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn state(&self) -> GridState {
        self.state
    }

    pub fn step_num(&self) -> u32 {
        self.step_num
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn num_states(&self) -> usize {
        self.config.num_states()
    }

    /// Wraps a raw index after range-checking it.
    pub fn state_from_index(&self, index: usize) -> Result<GridState, EnvError> {
        if index >= self.config.num_states() {
            return Err(EnvError::IndexOutOfRange {
                index,
                count: self.config.num_states(),
            });
        }
        Ok(GridState { index })
    }

    /// Starts a new episode at a uniformly random cell.
    ///
    /// `seed` reseeds the episode generator; `None` continues the
    /// current stream.
    pub fn reset(&mut self, seed: Option<u64>) -> (GridState, StepInfo) {
        if let Some(s) = seed {
            self.rng = ChaCha8Rng::seed_from_u64(s);
        }
        let index = self.rng.random_range(0..self.config.num_states());
        self.state = GridState { index };
        self.step_num = 0;
        self.done = false;
        let (row, span) = self.row_span(self.state);
        (self.state, StepInfo { row, span })
    }

    /// Pure clamped dynamics: where `action` leads from `state`,
    /// independent of episode bookkeeping.
    pub fn transition(&self, state: GridState, action: Action) -> GridState {
        let (row, span) = self.row_span(state);
        let (d_row, d_span) = action.displacement(self.config.step_length);
        let cand_row = row as i64 + d_row;
        let cand_span = span as i64 + d_span;
        let next_row = if cand_row < 0 || cand_row >= self.config.num_rows() as i64 {
            row
        } else {
            cand_row as usize
        };
        let next_span = if cand_span < self.config.min_span as i64
            || cand_span > self.config.max_span as i64
        {
            span
        } else {
            cand_span as u32
        };
        self.grid_to_state(next_row, next_span)
            .expect("clamped cell is on the grid")
    }

    /// Unit-area cost of a cell, yuan/m².
    pub fn cell_cost(&self, state: GridState) -> f64 {
        let (row, span) = self.row_span(state);
        cost_model::unit_area_cost(&self.config.materials[row], span as f64)
            .expect("grid spans are positive")
    }

    /// Advances the episode by one action.
    ///
    /// The reward is the negative cost of the post-move cell; blocked
    /// moves therefore score exactly like standing still.
    pub fn step(&mut self, action: Action) -> Result<StepResult, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeFinished);
        }
        let next = self.transition(self.state, action);
        let reward = -self.cell_cost(next);
        self.state = next;
        self.step_num += 1;
        if self.step_num >= self.config.max_steps {
            self.done = true;
        }
        let (row, span) = self.row_span(next);
        Ok(StepResult {
            next_state: next,
            reward,
            done: self.done,
            truncated: false,
            info: StepInfo { row, span },
        })
    }

    fn row_span(&self, state: GridState) -> (usize, u32) {
        let cols = self.config.num_columns();
        let row = state.index / cols;
        let col = state.index % cols;
        (row, self.config.min_span + self.config.step_length * col as u32)
    }

    /// Converts a flat state index to `(row, span in m)`.
    pub fn state_to_grid(&self, index: usize) -> Result<(usize, u32), EnvError> {
        let state = self.state_from_index(index)?;
        Ok(self.row_span(state))
    }

    /// Inverse of [`state_to_grid`](Self::state_to_grid).
    pub fn grid_to_state(&self, row: usize, span: u32) -> Result<GridState, EnvError> {
        let off_grid = EnvError::OffGrid { row, span };
        if row >= self.config.num_rows() {
            return Err(off_grid);
        }
        if span < self.config.min_span
            || span > self.config.max_span
            || (span - self.config.min_span) % self.config.step_length != 0
        {
            return Err(off_grid);
        }
        let col = ((span - self.config.min_span) / self.config.step_length) as usize;
        Ok(GridState {
            index: row * self.config.num_columns() + col,
        })
    }

    fn checkerboard(&self) -> ImageBuffer {
        let cp = self.config.cell_pixels;
        let mut img = ImageBuffer::new(self.config.num_columns() * cp, self.config.num_rows() * cp);
        for row in 0..self.config.num_rows() {
            for col in 0..self.config.num_columns() {
                let color = if (row + col) % 2 == 0 {
                    image::BLACK
                } else {
                    image::GRAY
                };
                img.fill_rect(row * cp, col * cp, cp, cp, color);
            }
        }
        img
    }

    fn paint_cell(&self, img: &mut ImageBuffer, state: GridState, color: [u8; 3]) {
        let cp = self.config.cell_pixels;
        let cols = self.config.num_columns();
        let row = state.index / cols;
        let col = state.index % cols;
        img.fill_rect(row * cp, col * cp, cp, cp, color);
    }

    /// Renders the checkerboard with the agent's cell in red.
    pub fn render_state(&self, state: GridState) -> ImageBuffer {
        let mut img = self.checkerboard();
        self.paint_cell(&mut img, state, image::RED);
        img
    }

    /// Renders a whole episode: start red, intermediate states blue,
    /// endpoint green. Cells are painted in visit order, so later visits
    /// win and the endpoint always shows green.
    pub fn render_trajectory(&self, trace: &EpisodeTrace) -> Result<ImageBuffer, EnvError> {
        if trace.is_empty() {
            return Err(EnvError::EmptyTrace);
        }
        let mut img = self.checkerboard();
        let last = trace.len() - 1;
        for (i, &s) in trace.states.iter().enumerate() {
            let color = if i == last {
                image::GREEN
            } else if i == 0 {
                image::RED
            } else {
                image::BLUE
            };
            self.paint_cell(&mut img, s, color);
        }
        Ok(img)
    }

    /// Brute-force argmin of the cell cost over the whole grid, ties
    /// broken by lowest index.
    pub fn optimal_state(&self) -> GridState {
        let mut best = GridState { index: 0 };
        let mut best_cost = self.cell_cost(best);
        for index in 1..self.config.num_states() {
            let s = GridState { index };
            let c = self.cell_cost(s);
            if c < best_cost {
                best = s;
                best_cost = c;
            }
        }
        best
    }
}
