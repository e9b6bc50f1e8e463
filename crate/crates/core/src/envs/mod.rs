//! Environments: the two grid worlds used by the training experiments plus a
//! seeded random-MDP generator that the operator audits draw their corpora
//! from.
//!
//! Observations are exposed two ways behind one interface: a dense integer
//! state id (for tabular models and diagnostics) and a one-hot float encoding
//! (for the neural models). Both are derived from the same internal state.

mod diagonal;
mod random;
mod tabular;
mod twocolors;

pub use diagonal::DiagonalEnv;
pub use random::{nearby_policy, random_mdp, random_policy};
pub use tabular::TabularEnv;
pub use twocolors::TwoColorsEnv;

use crate::error::Result;

/// Which reward source a step landed on, for experiment diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Capture {
    Optimum,
    Suboptimum,
}

/// Outcome of a single environment step.
#[derive(Debug, Clone)]
pub struct StepResult {
    /// Observation id after the step.
    pub obs_id: usize,
    /// Raw environment reward. Shaping happens in the learners, never here.
    pub reward: f64,
    /// True termination: a continuation from here is worth zero.
    pub done: bool,
    /// Horizon cut: the episode stops but the state has ongoing value.
    pub truncated: bool,
    pub capture: Option<Capture>,
}

/// A discrete-state, discrete-action episodic environment.
pub trait Env {
    /// Size of the observation-id space.
    fn n_obs(&self) -> usize;
    fn n_actions(&self) -> usize;
    /// Length of the one-hot encoding; not necessarily `n_obs`.
    fn obs_dim(&self) -> usize;

    /// Starts a fresh episode and returns the first observation id.
    fn reset(&mut self) -> usize;

    /// Applies an action. Fails on an out-of-range action or on stepping a
    /// finished episode.
    fn step(&mut self, action: usize) -> Result<StepResult>;

    /// Current observation id.
    fn obs_id(&self) -> usize;

    /// Writes the one-hot encoding of `obs_id` into `out` (length `obs_dim`).
    fn encode_obs(&self, obs_id: usize, out: &mut [f64]);
}
