//! Continuing grid task with a fixed decoy reward and a moving target.
//!
//! A 0.5 reward sits permanently at the top-right corner; collecting it
//! teleports the agent back to the start, which makes it an easy, stable
//! cycle to exploit. The 1.0 target relocates to a random free cell every
//! time it is collected, so consistently beating the decoy requires a policy
//! that reads the target position from the observation and chases it.
//!
//! Episodes are horizon cuts only; the task itself never terminates.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::diagonal::apply_move;
use super::{Capture, Env, StepResult};

const N_ACTIONS: usize = 4;

#[derive(Debug, Clone)]
pub struct TwoColorsEnv {
    size: usize,
    episode_len: usize,
    agent: (usize, usize),
    goal: (usize, usize),
    steps: usize,
    finished: bool,
    rng: ChaCha8Rng,
}

impl TwoColorsEnv {
    /// Standard instance: 10x10 grid, 500-step episodes.
    pub fn new(seed: u64) -> Self {
        Self::with_shape(10, 500, seed)
    }

    pub fn with_shape(size: usize, episode_len: usize, seed: u64) -> Self {
        assert!(size >= 2, "grid needs room for distinct corners");
        let mut env = Self {
            size,
            episode_len,
            agent: (size - 1, 0),
            goal: (0, 0),
            steps: 0,
            finished: false,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        env.goal = env.draw_goal();
        env
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn goal(&self) -> (usize, usize) {
        self.goal
    }

    fn start(&self) -> (usize, usize) {
        (self.size - 1, 0)
    }

    fn suboptimum(&self) -> (usize, usize) {
        (0, self.size - 1)
    }

    fn cell_id(&self, cell: (usize, usize)) -> usize {
        cell.0 * self.size + cell.1
    }

    /// Uniform draw over free cells: anywhere except the decoy corner and
    /// the agent's current cell. The start square is eligible whenever the
    /// agent is elsewhere.
    fn draw_goal(&mut self) -> (usize, usize) {
        loop {
            let row = self.rng.gen_range(0..self.size);
            let col = self.rng.gen_range(0..self.size);
            let cell = (row, col);
            if cell != self.suboptimum() && cell != self.agent {
                return cell;
            }
        }
    }
}

impl Env for TwoColorsEnv {
    fn n_obs(&self) -> usize {
        let cells = self.size * self.size;
        cells * cells
    }

    fn n_actions(&self) -> usize {
        N_ACTIONS
    }

    fn obs_dim(&self) -> usize {
        2 * self.size * self.size
    }

    fn reset(&mut self) -> usize {
        self.agent = self.start();
        self.steps = 0;
        self.finished = false;
        self.goal = self.draw_goal();
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

        let (reward, capture) = if self.agent == self.suboptimum() {
            // Decoy: pay out and send the agent home. The target stays put.
            self.agent = self.start();
            (0.5, Some(Capture::Suboptimum))
        } else if self.agent == self.goal {
            self.goal = self.draw_goal();
            (1.0, Some(Capture::Optimum))
        } else {
            (0.0, None)
        };

        let truncated = self.steps >= self.episode_len;
        self.finished = truncated;
        Ok(StepResult {
            obs_id: self.obs_id(),
            reward,
            done: false,
            truncated,
            capture,
        })
    }

    /// Composite id: agent cell crossed with goal cell.
    fn obs_id(&self) -> usize {
        let cells = self.size * self.size;
        self.cell_id(self.agent) * cells + self.cell_id(self.goal)
    }

    fn encode_obs(&self, obs_id: usize, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.obs_dim());
        let cells = self.size * self.size;
        out.fill(0.0);
        out[obs_id / cells] = 1.0;
        out[cells + obs_id % cells] = 1.0;
    }
}
