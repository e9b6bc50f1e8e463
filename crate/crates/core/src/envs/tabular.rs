//! Sampling adapter that lets a tabular model drive the `Env` interface.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Env, StepResult};
use crate::error::{Error, Result};
use crate::mdp::TabularMDP;

/// Episodes start from the model's initial distribution and run to the
/// step cap; the model itself has no terminal states, so episodes only
/// truncate.
pub struct TabularEnv {
    mdp: TabularMDP,
    rng: ChaCha8Rng,
    state: usize,
    steps: usize,
    max_steps: usize,
}

impl TabularEnv {
    pub fn new(mdp: TabularMDP, max_steps: usize, seed: u64) -> Result<Self> {
        if max_steps == 0 {
            return Err(Error::Domain("max_steps must be >= 1".into()));
        }
        let mut env = Self {
            mdp,
            rng: ChaCha8Rng::seed_from_u64(seed),
            state: 0,
            steps: 0,
            max_steps,
        };
        env.state = env.draw_initial();
        Ok(env)
    }

    pub fn mdp(&self) -> &TabularMDP {
        &self.mdp
    }

    fn draw_initial(&mut self) -> usize {
        let u: f64 = self.rng.gen();
        let mut acc = 0.0;
        for (s, &p) in self.mdp.initial_dist().iter().enumerate() {
            acc += p;
            if u < acc {
                return s;
            }
        }
        self.mdp.n_states() - 1
    }
}

impl Env for TabularEnv {
    fn n_obs(&self) -> usize {
        self.mdp.n_states()
    }

    fn n_actions(&self) -> usize {
        self.mdp.n_actions()
    }

    fn obs_dim(&self) -> usize {
        self.mdp.n_states()
    }

    fn reset(&mut self) -> usize {
        self.steps = 0;
        self.state = self.draw_initial();
        self.state
    }

    fn step(&mut self, action: usize) -> Result<StepResult> {
        if action >= self.mdp.n_actions() {
            return Err(Error::Domain(format!(
                "action {action} out of range 0..{}",
                self.mdp.n_actions()
            )));
        }
        let reward = self.mdp.reward()[[self.state, action]];
        let u: f64 = self.rng.gen();
        let mut acc = 0.0;
        let mut next = self.mdp.n_states() - 1;
        for s2 in 0..self.mdp.n_states() {
            acc += self.mdp.transition()[[self.state, action, s2]];
            if u < acc {
                next = s2;
                break;
            }
        }
        self.state = next;
        self.steps += 1;
        Ok(StepResult {
            obs_id: next,
            reward,
            done: false,
            truncated: self.steps >= self.max_steps,
            capture: None,
        })
    }

    fn obs_id(&self) -> usize {
        self.state
    }

    fn encode_obs(&self, obs_id: usize, out: &mut [f64]) {
        out.fill(0.0);
        out[obs_id] = 1.0;
    }
}
