//! Learners over the tabular core: a clipped-surrogate on-policy algorithm
//! and a discrete-action soft actor-critic, both built on entropy-shaped
//! rewards with hand-written reverse-mode gradients.

pub mod checks;
pub mod error;
pub mod model;
pub mod ppo;
pub mod sac;
pub mod schedule;

pub use error::{Error, Result};
