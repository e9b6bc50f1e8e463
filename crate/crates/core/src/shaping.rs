//! Reward shaping with the expected next-state entropy bonus, plus the audits
//! that separate it from potential-based shaping.

use ndarray::{Array1, Array2, Array3, Axis};

use crate::error::{Error, Result};
use crate::mdp::{
    exact_policy_eval, policy_entropy, QTable, TabularMDP, TabularPolicy,
};
use crate::operators::{bootstrap_backup, value_iteration, BoundReport};

/// Tie tolerance for greedy-action set comparisons.
pub const ARGMAX_TIE_TOL: f64 = 1e-9;

/// Base rewards and the entropy bonus discount * alpha * E_{s'}[H(s')],
/// kept apart so audits can inspect each piece.
#[derive(Debug, Clone)]
pub struct ShapedReward {
    base: Array2<f64>,
    bonus: Array2<f64>,
    alpha: f64,
}

impl ShapedReward {
    pub fn base(&self) -> &Array2<f64> {
        &self.base
    }

    pub fn bonus(&self) -> &Array2<f64> {
        &self.bonus
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn shaped(&self) -> Array2<f64> {
        &self.base + &self.bonus
    }
}

/// State potential for the shaping contrast; induces the additive reward
/// f(s, a, s') = discount * phi(s') - phi(s).
#[derive(Debug, Clone)]
pub struct PotentialFunction {
    phi: Array1<f64>,
}

impl PotentialFunction {
    pub fn new(phi: Array1<f64>) -> Result<Self> {
        if phi.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain("potential entries must be finite".into()));
        }
        Ok(Self { phi })
    }

    pub fn phi(&self) -> &Array1<f64> {
        &self.phi
    }
}

/// Tabulates rhat(s, a) = r(s, a) + discount * alpha * E_{s'}[H_pi(s')].
///
/// With alpha = 0 the shaped table equals the base table exactly, no
/// rounding residue.
pub fn shape_rewards(
    mdp: &TabularMDP,
    policy: &TabularPolicy,
    alpha: f64,
) -> Result<ShapedReward> {
    if alpha < 0.0 || !alpha.is_finite() {
        return Err(Error::Domain(format!("temperature must be >= 0, got {alpha}")));
    }
    if policy.n_states() != mdp.n_states() || policy.n_actions() != mdp.n_actions() {
        return Err(Error::Domain("policy shape does not match model".into()));
    }
    let bonus = if alpha == 0.0 {
        Array2::zeros(mdp.reward().raw_dim())
    } else {
        let h = policy_entropy(policy);
        mdp.expected_next(&h) * (mdp.discount() * alpha)
    };
    Ok(ShapedReward {
        base: mdp.reward().clone(),
        bonus,
        alpha,
    })
}

/// Sample-path counterpart of `shape_rewards`: the realized next state's
/// entropy stands in for the expectation.
pub fn trajectory_shaped_reward(r_t: f64, entropy_next: f64, gamma: f64, alpha: f64) -> f64 {
    r_t + gamma * alpha * entropy_next
}

/// Checks the two sides of the absorbing property.
///
/// Bootstrap side: `horizon` applications of the shaped backup from zero
/// reproduce the exact evaluation within the geometric truncation bound,
/// i.e. the bonus behaves as ordinary reward. Soft side: the soft value
/// unroll exceeds the shaped value unroll by exactly the first step's
/// alpha * H(s), the term no reward rewrite can absorb.
pub fn absorbing_audit(
    mdp: &TabularMDP,
    policy: &TabularPolicy,
    alpha: f64,
    horizon: usize,
) -> Result<Vec<BoundReport>> {
    if horizon < 2 {
        return Err(Error::Domain(format!("horizon must be >= 2, got {horizon}")));
    }
    let gamma = mdp.discount();
    let h = policy_entropy(policy);
    let q_exact = exact_policy_eval(mdp, policy, alpha)?;

    let mut q = QTable::zeros(q_exact.raw_dim());
    for _ in 0..horizon {
        q = bootstrap_backup(&q, mdp, policy, alpha)?;
    }
    let unroll_gap = q
        .iter()
        .zip(q_exact.iter())
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let q_sup = (mdp.max_abs_reward() + gamma * alpha * mdp.entropy_cap()) / (1.0 - gamma);
    let truncation = gamma.powi(horizon as i32) * q_sup;

    let p_pi = mdp.policy_transition(policy);
    let rbar = (policy.probs() * mdp.reward()).sum_axis(Axis(1));
    let bonus_bar = p_pi.dot(&h) * (gamma * alpha);
    let mut v_soft = Array1::<f64>::zeros(mdp.n_states());
    let mut v_shaped = Array1::<f64>::zeros(mdp.n_states());
    for _ in 0..horizon {
        v_soft = &rbar + &(&h * alpha) + p_pi.dot(&v_soft) * gamma;
        v_shaped = &rbar + &bonus_bar + p_pi.dot(&v_shaped) * gamma;
    }
    let first_step_gap = v_soft
        .iter()
        .zip(v_shaped.iter())
        .zip(h.iter())
        .fold(0.0f64, |m, ((vs, vb), hs)| {
            m.max(((vs - vb) - alpha * hs).abs())
        });
    // The two unrolls share every reward term, so the residual is only the
    // tail alpha * gamma^K * P^K h.
    let tail = alpha * gamma.powi(horizon as i32) * mdp.entropy_cap();

    Ok(vec![
        BoundReport::identity(
            format!("shaped unroll over {horizon} steps vs exact evaluation"),
            unroll_gap,
            0.0,
            truncation + 1e-9,
        ),
        BoundReport::identity(
            "soft minus shaped unroll vs first-step entropy term",
            first_step_gap,
            0.0,
            tail + 1e-9,
        ),
    ])
}

/// Greedy-action set of a Q row under the tie tolerance.
pub fn argmax_set(row: &[f64], tol: f64) -> Vec<usize> {
    let best = row.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    row.iter()
        .enumerate()
        .filter(|(_, &x)| x >= best - tol)
        .map(|(a, _)| a)
        .collect()
}

#[derive(Debug, Clone)]
pub struct PotentialReport {
    /// Per-state greedy sets agree between the original and shaped models.
    pub argmax_equal: bool,
    /// States whose greedy set has more than one member in either model.
    pub tied_states: Vec<usize>,
    /// |Q_shaped - (Q - phi(s))| in max norm; potential shaping only shifts.
    pub offset: BoundReport,
}

impl PotentialReport {
    pub fn violated(&self) -> bool {
        !self.argmax_equal || self.offset.violated
    }
}

impl std::fmt::Display for PotentialReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "potential shaping: greedy sets {}; {} tied state(s); {}",
            if self.argmax_equal { "equal" } else { "DIFFER" },
            self.tied_states.len(),
            self.offset
        )
    }
}

/// Shapes the model with f(s, a, s') = discount * phi(s') - phi(s), solves
/// both models, and compares greedy sets and the value offset.
pub fn potential_shaping_audit(
    mdp: &TabularMDP,
    phi: &PotentialFunction,
) -> Result<PotentialReport> {
    if phi.phi().len() != mdp.n_states() {
        return Err(Error::Domain("potential length does not match model".into()));
    }
    let gamma = mdp.discount();
    let shift = mdp.expected_next(phi.phi()) * gamma;
    let mut shaped_reward = mdp.reward() + &shift;
    for s in 0..mdp.n_states() {
        for a in 0..mdp.n_actions() {
            shaped_reward[[s, a]] -= phi.phi()[s];
        }
    }
    let shaped_mdp = TabularMDP::new(
        mdp.transition().clone(),
        shaped_reward,
        gamma,
        mdp.initial_dist().clone(),
    )?;

    let base = value_iteration(mdp, 0.0, 1e-10)?;
    let shaped = value_iteration(&shaped_mdp, 0.0, 1e-10)?;

    let mut argmax_equal = true;
    let mut tied_states = Vec::new();
    let mut offset_gap = 0.0f64;
    for s in 0..mdp.n_states() {
        let row_base: Vec<f64> = (0..mdp.n_actions()).map(|a| base.q[[s, a]]).collect();
        let row_shaped: Vec<f64> = (0..mdp.n_actions()).map(|a| shaped.q[[s, a]]).collect();
        let set_base = argmax_set(&row_base, ARGMAX_TIE_TOL);
        let set_shaped = argmax_set(&row_shaped, ARGMAX_TIE_TOL);
        if set_base.len() > 1 || set_shaped.len() > 1 {
            tied_states.push(s);
        }
        if set_base != set_shaped {
            argmax_equal = false;
        }
        for a in 0..mdp.n_actions() {
            offset_gap = offset_gap.max((row_shaped[a] - (row_base[a] - phi.phi()[s])).abs());
        }
    }

    Ok(PotentialReport {
        argmax_equal,
        tied_states,
        offset: BoundReport::identity(
            "shaped Q vs base Q minus potential",
            offset_gap,
            0.0,
            1e-7,
        ),
    })
}

/// Frozen two-state instance where the entropy bonus flips the greedy
/// action at state 0.
///
/// State 1 parks under three interchangeable actions, so its softmax policy
/// stays uniform (entropy ln 3) at any temperature. At state 0, staying pays
/// 0.55 and moving to state 1 pays 0, with a third -10 action keeping state
/// 0's own softmax entropy pinned near ln 2. Plain solve: staying wins by
/// 1.0. At the returned temperature the continuation entropy of state 1
/// outweighs the reward deficit and moving wins, margin about 0.27.
pub fn entropy_flip_witness() -> (TabularMDP, f64) {
    let mut p = Array3::zeros((2, 3, 2));
    p[[0, 0, 0]] = 1.0;
    p[[0, 1, 1]] = 1.0;
    p[[0, 2, 0]] = 1.0;
    for a in 0..3 {
        p[[1, a, 1]] = 1.0;
    }
    let reward =
        Array2::from_shape_vec((2, 3), vec![0.55, 0.0, -10.0, 0.5, 0.5, 0.5]).unwrap();
    let mdp = TabularMDP::new(p, reward, 0.9, Array1::from(vec![1.0, 0.0]))
        .expect("witness instance is valid by construction");
    (mdp, 1.0)
}
