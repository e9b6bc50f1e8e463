//! Generalized advantage estimation over entropy-shaped rewards.
//!
//! The estimator is exact and unnormalized; batch-level normalization
//! belongs to the learners.

use crate::error::{Error, Result};
use crate::operators::BoundReport;
use crate::shaping::trajectory_shaped_reward;

/// One step of experience. `reward` is the raw environment reward;
/// `entropy_next` is the behavior policy's entropy at the successor state
/// (0 on true termination, where no successor policy exists).
#[derive(Debug, Clone, Copy)]
pub struct Transition {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub entropy_next: f64,
    pub value: f64,
    pub value_next: f64,
    pub log_prob: f64,
    pub done: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct GaeConfig {
    pub gamma: f64,
    pub lambda: f64,
    pub alpha: f64,
}

impl GaeConfig {
    pub fn new(gamma: f64, lambda: f64, alpha: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::Domain(format!("gamma must be in [0, 1), got {gamma}")));
        }
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::Domain(format!("lambda must be in [0, 1], got {lambda}")));
        }
        if alpha < 0.0 || !alpha.is_finite() {
            return Err(Error::Domain(format!("alpha must be >= 0, got {alpha}")));
        }
        Ok(Self { gamma, lambda, alpha })
    }
}

/// Backward-recursive advantage estimates over shaped rewards:
/// delta_t = rhat_t + gamma V(s_{t+1}) - V(s_t),
/// A_t = delta_t + gamma lambda (1 - done_t) A_{t+1}.
///
/// A set done flag ends the episode: continuation value and the entropy
/// bonus are both zeroed. An unset flag at the trajectory's end means
/// time-limit truncation, which bootstraps from that step's `value_next`.
pub fn compute_gae(trajectory: &[Transition], config: &GaeConfig) -> Result<Vec<f64>> {
    if trajectory.is_empty() {
        return Err(Error::Domain("empty trajectory".into()));
    }
    for (t, tr) in trajectory.iter().enumerate() {
        if tr.entropy_next < 0.0 {
            return Err(Error::Domain(format!(
                "negative entropy {} at step {t}",
                tr.entropy_next
            )));
        }
    }
    let mut advantages = vec![0.0; trajectory.len()];
    let mut acc = 0.0;
    for t in (0..trajectory.len()).rev() {
        let tr = &trajectory[t];
        let (entropy, cont, carry) = if tr.done {
            (0.0, 0.0, 0.0)
        } else {
            (tr.entropy_next, tr.value_next, acc)
        };
        let rhat = trajectory_shaped_reward(tr.reward, entropy, config.gamma, config.alpha);
        let delta = rhat + config.gamma * cont - tr.value;
        acc = delta + config.gamma * config.lambda * carry;
        advantages[t] = acc;
    }
    Ok(advantages)
}

/// Update-time augmentation: A_t + gamma alpha H(s_{t+1}) under the policy
/// currently being optimized, not the rollout policy. The learner feeds the
/// recomputed entropy so the term carries gradient.
pub fn augment_advantage(
    advantage: f64,
    entropy_next_current_policy: f64,
    gamma: f64,
    alpha: f64,
) -> f64 {
    advantage + gamma * alpha * entropy_next_current_policy
}

/// Numerical companion to the absorbing-property argument.
#[derive(Debug, Clone)]
pub struct IncompatibilityReport {
    /// Telescoping residual when the bonus rides on the transition
    /// (shaped-reward association). Zero up to rounding.
    pub bootstrap_residual: f64,
    /// Telescoping residual when the bonus rides on the state, as the soft
    /// value function keeps it. Equals alpha H(s_0) minus the discounted
    /// tail term, hence strictly positive for a stochastic start.
    pub soft_residual: f64,
    pub checks: Vec<BoundReport>,
}

impl IncompatibilityReport {
    pub fn violated(&self) -> bool {
        self.checks.iter().any(|c| c.violated)
    }
}

/// Unrolls one episode both ways. The shaped association writes
/// rhat_t = r_t + gamma alpha H(s_{t+1}) and its lambda = 1 sum telescopes
/// against the discounted shaped return exactly. The soft association
/// writes r_t + alpha H(s_t), and the same telescoping leaves the
/// first state's entropy term stranded.
///
/// `entropy_start` is the policy entropy at the first state; entropies at
/// later visited states come from the transitions' `entropy_next`.
/// The trajectory must be one contiguous episode: `done`, if present at
/// all, only on the final transition.
pub fn incompatibility_demo(
    trajectory: &[Transition],
    entropy_start: f64,
    config: &GaeConfig,
) -> Result<IncompatibilityReport> {
    if trajectory.is_empty() {
        return Err(Error::Domain("empty trajectory".into()));
    }
    if trajectory[..trajectory.len() - 1].iter().any(|tr| tr.done) {
        return Err(Error::Domain(
            "demo expects a single contiguous episode".into(),
        ));
    }
    let n = trajectory.len();
    let gamma = config.gamma;
    let alpha = config.alpha;
    let last = &trajectory[n - 1];
    let tail_value = if last.done { 0.0 } else { last.value_next };
    let tail_entropy = if last.done { 0.0 } else { last.entropy_next };

    // Oracle: discounted shaped return minus baseline, bootstrap tail on
    // truncation.
    let mut shaped_return = gamma.powi(n as i32) * tail_value;
    for (t, tr) in trajectory.iter().enumerate() {
        let entropy = if tr.done { 0.0 } else { tr.entropy_next };
        shaped_return +=
            gamma.powi(t as i32) * trajectory_shaped_reward(tr.reward, entropy, gamma, alpha);
    }
    let oracle = shaped_return - trajectory[0].value;

    let full = GaeConfig::new(gamma, 1.0, alpha)?;
    let bootstrap_sum = compute_gae(trajectory, &full)?[0];
    let bootstrap_residual = (bootstrap_sum - oracle).abs();

    // Soft association: the bonus sticks to the state being left.
    let mut soft_sum = 0.0;
    for (t, tr) in trajectory.iter().enumerate() {
        let entropy_here = if t == 0 {
            entropy_start
        } else {
            trajectory[t - 1].entropy_next
        };
        let cont = if tr.done { 0.0 } else { tr.value_next };
        let delta = tr.reward + alpha * entropy_here + gamma * cont - tr.value;
        soft_sum += gamma.powi(t as i32) * delta;
    }
    let soft_residual = (soft_sum - oracle).abs();
    let stranded = alpha * entropy_start - alpha * gamma.powi(n as i32) * tail_entropy;

    Ok(IncompatibilityReport {
        bootstrap_residual,
        soft_residual,
        checks: vec![
            BoundReport::identity(
                "shaped association telescopes",
                bootstrap_residual,
                0.0,
                1e-12,
            ),
            BoundReport::identity(
                "soft association strands the first-state entropy",
                soft_residual,
                stranded.abs(),
                1e-12,
            ),
        ],
    })
}
