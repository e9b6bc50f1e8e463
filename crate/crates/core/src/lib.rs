//! Exact tabular machinery for entropy-augmented reinforcement learning:
//! dense MDPs, entropy-shaped rewards, soft and bootstrapped Bellman
//! operators with their bound audits, advantage estimation, and the grid
//! environments the learners train on.

pub mod envs;
pub mod gae;
pub mod error;
pub mod mdp;
pub mod operators;
pub mod shaping;

pub use error::{Error, Result};
