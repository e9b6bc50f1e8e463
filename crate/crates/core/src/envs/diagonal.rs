//! Square grid with two terminal rewards on the off-diagonal corners.
//!
//! The agent starts at the top-left corner. A 4.5 reward sits at the
//! top-right corner and a 5.0 reward at the bottom-left one, both the same
//! number of steps away, so a learner that commits early to the first corner
//! it finds settles for 4.5.

use ndarray::{Array1, Array2, Array3};

use crate::error::{Error, Result};
use crate::mdp::TabularMDP;

use super::{Capture, Env, StepResult};

pub const ACTION_UP: usize = 0;
pub const ACTION_DOWN: usize = 1;
pub const ACTION_LEFT: usize = 2;
pub const ACTION_RIGHT: usize = 3;

const N_ACTIONS: usize = 4;

#[derive(Debug, Clone)]
pub struct DiagonalEnv {
    size: usize,
    max_steps: usize,
    agent: (usize, usize),
    steps: usize,
    finished: bool,
}

impl DiagonalEnv {
    /// Standard instance: 10x10 grid, 100-step horizon.
    pub fn new() -> Self {
        Self::with_shape(10, 100)
    }

    pub fn with_shape(size: usize, max_steps: usize) -> Self {
        assert!(size >= 2, "grid needs room for distinct corners");
        Self {
            size,
            max_steps,
            agent: (0, 0),
            steps: 0,
            finished: false,
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    fn suboptimum(&self) -> (usize, usize) {
        (0, self.size - 1)
    }

    fn optimum(&self) -> (usize, usize) {
        (self.size - 1, 0)
    }

    fn cell_id(&self, cell: (usize, usize)) -> usize {
        cell.0 * self.size + cell.1
    }

    fn goal_reward(&self, cell: (usize, usize)) -> Option<(f64, Capture)> {
        if cell == self.suboptimum() {
            Some((4.5, Capture::Suboptimum))
        } else if cell == self.optimum() {
            Some((5.0, Capture::Optimum))
        } else {
            None
        }
    }

    /// Dense MDP form: deterministic moves, terminal corners absorbing with
    /// zero reward, start mass on the top-left cell.
    pub fn to_tabular(&self, discount: f64) -> Result<TabularMDP> {
        let n = self.size * self.size;
        let mut transition = Array3::zeros((n, N_ACTIONS, n));
        let mut reward = Array2::zeros((n, N_ACTIONS));
        for row in 0..self.size {
            for col in 0..self.size {
                let s = self.cell_id((row, col));
                let absorbing = self.goal_reward((row, col)).is_some();
                for a in 0..N_ACTIONS {
                    if absorbing {
                        transition[[s, a, s]] = 1.0;
                        continue;
                    }
                    let next = apply_move((row, col), a, self.size);
                    transition[[s, a, self.cell_id(next)]] = 1.0;
                    if let Some((r, _)) = self.goal_reward(next) {
                        reward[[s, a]] = r;
                    }
                }
            }
        }
        let mut initial = Array1::zeros(n);
        initial[self.cell_id((0, 0))] = 1.0;
        TabularMDP::new(transition, reward, discount, initial)
    }
}

impl Default for DiagonalEnv {
    fn default() -> Self {
        Self::new()
    }
}

impl Env for DiagonalEnv {
    fn n_obs(&self) -> usize {
        self.size * self.size
    }

    fn n_actions(&self) -> usize {
        N_ACTIONS
    }

    fn obs_dim(&self) -> usize {
        self.size * self.size
    }

    fn reset(&mut self) -> usize {
        self.agent = (0, 0);
        self.steps = 0;
        self.finished = false;
        self.obs_id()
    }

    fn step(&mut self, action: usize) -> Result<StepResult> {
        if self.finished {
            return Err(Error::Domain("step on a finished episode".into()));
        }
        if action >= N_ACTIONS {
            return Err(Error::Domain(format!(
                "action index {action} out of range (n_actions = {N_ACTIONS})"
            )));
        }
        self.agent = apply_move(self.agent, action, self.size);
        self.steps += 1;
        let (reward, capture, done) = match self.goal_reward(self.agent) {
            Some((r, c)) => (r, Some(c), true),
            None => (0.0, None, false),
        };
        let truncated = !done && self.steps >= self.max_steps;
        self.finished = done || truncated;
        Ok(StepResult {
            obs_id: self.obs_id(),
            reward,
            done,
            truncated,
            capture,
        })
    }

    fn obs_id(&self) -> usize {
        self.cell_id(self.agent)
    }

    fn encode_obs(&self, obs_id: usize, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.obs_dim());
        out.fill(0.0);
        out[obs_id] = 1.0;
    }
}

/// Moves one cell; walking off the grid leaves the position unchanged.
pub(super) fn apply_move(cell: (usize, usize), action: usize, size: usize) -> (usize, usize) {
    let (row, col) = cell;
    match action {
        ACTION_UP => (row.saturating_sub(1), col),
        ACTION_DOWN => ((row + 1).min(size - 1), col),
        ACTION_LEFT => (row, col.saturating_sub(1)),
        ACTION_RIGHT => (row, (col + 1).min(size - 1)),
        _ => unreachable!("validated upstream"),
    }
}
