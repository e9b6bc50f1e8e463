//! Tabular MDPs and the exact quantities the rest of the toolkit is audited
//! against: entropy tables, policy evaluation with an entropy-shaped reward,
//! discounted returns, occupancy measures, and advantages.
//!
//! Everything here is dense and solved directly. State spaces of a few
//! hundred are the intended scale; nothing is sparse or approximate.

use ndarray::{Array1, Array2, Array3};

use crate::error::{Error, Result};

/// Row-sum tolerance for probability tables.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// Fixed-point residual accepted from the direct policy-evaluation solve.
pub const EVAL_RESIDUAL_TOL: f64 = 1e-10;

/// Per-state values.
pub type ValueTable = Array1<f64>;
/// Per-state-action values.
pub type QTable = Array2<f64>;

/// A finite MDP with dense transition and reward tables.
#[derive(Debug, Clone)]
pub struct TabularMDP {
    n_states: usize,
    n_actions: usize,
    /// transition[[s, a, s']] = p(s' | s, a); each (s, a) row is a simplex.
    transition: Array3<f64>,
    /// reward[[s, a]], finite.
    reward: Array2<f64>,
    /// Discount in [0, 1).
    discount: f64,
    /// Start-state distribution.
    initial_dist: Array1<f64>,
}

impl TabularMDP {
    pub fn new(
        transition: Array3<f64>,
        reward: Array2<f64>,
        discount: f64,
        initial_dist: Array1<f64>,
    ) -> Result<Self> {
        let (s, a, s2) = transition.dim();
        if s == 0 || a == 0 {
            return Err(Error::InvalidModel("empty state or action set".into()));
        }
        if s2 != s {
            return Err(Error::InvalidModel(format!(
                "transition table is {s}x{a}x{s2}, want last axis {s}"
            )));
        }
        if reward.dim() != (s, a) {
            return Err(Error::InvalidModel(format!(
                "reward table is {:?}, want ({s}, {a})",
                reward.dim()
            )));
        }
        if initial_dist.len() != s {
            return Err(Error::InvalidModel(format!(
                "initial distribution has {} entries, want {s}",
                initial_dist.len()
            )));
        }
        if !(0.0..1.0).contains(&discount) {
            return Err(Error::InvalidModel(format!(
                "discount {discount} outside [0, 1)"
            )));
        }
        if reward.iter().any(|r| !r.is_finite()) {
            return Err(Error::InvalidModel("non-finite reward entry".into()));
        }
        for st in 0..s {
            for ac in 0..a {
                let row = transition.slice(ndarray::s![st, ac, ..]);
                check_simplex(row.iter(), &format!("transition row (s={st}, a={ac})"))?;
            }
        }
        check_simplex(initial_dist.iter(), "initial distribution")?;
        Ok(Self {
            n_states: s,
            n_actions: a,
            transition,
            reward,
            discount,
            initial_dist,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn transition(&self) -> &Array3<f64> {
        &self.transition
    }

    pub fn reward(&self) -> &Array2<f64> {
        &self.reward
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn initial_dist(&self) -> &Array1<f64> {
        &self.initial_dist
    }

    /// Largest reward magnitude, the C_r in the operator bounds.
    pub fn max_abs_reward(&self) -> f64 {
        self.reward.iter().fold(0.0f64, |m, r| m.max(r.abs()))
    }

    /// Upper bound on any policy's per-state entropy: ln of the action count.
    pub fn entropy_cap(&self) -> f64 {
        (self.n_actions as f64).ln()
    }

    /// E_{s' ~ p(.|s,a)}[f(s')] for every (s, a).
    pub fn expected_next(&self, f: &Array1<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((self.n_states, self.n_actions));
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let mut acc = 0.0;
                for s2 in 0..self.n_states {
                    acc += self.transition[[s, a, s2]] * f[s2];
                }
                out[[s, a]] = acc;
            }
        }
        out
    }

    /// State-to-state transition matrix under `policy`.
    pub fn policy_transition(&self, policy: &TabularPolicy) -> Array2<f64> {
        let mut p = Array2::zeros((self.n_states, self.n_states));
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let w = policy.probs()[[s, a]];
                if w == 0.0 {
                    continue;
                }
                for s2 in 0..self.n_states {
                    p[[s, s2]] += w * self.transition[[s, a, s2]];
                }
            }
        }
        p
    }
}

/// A stochastic tabular policy; each state's row is a distribution over actions.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularPolicy {
    probs: Array2<f64>,
}

impl TabularPolicy {
    pub fn new(probs: Array2<f64>) -> Result<Self> {
        let (s, a) = probs.dim();
        if s == 0 || a == 0 {
            return Err(Error::InvalidModel("empty policy table".into()));
        }
        for st in 0..s {
            check_simplex(probs.row(st).iter(), &format!("policy row (s={st})"))?;
        }
        Ok(Self { probs })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self {
            probs: Array2::from_elem((n_states, n_actions), 1.0 / n_actions as f64),
        }
    }

    /// Point-mass policy taking `actions[s]` at state s.
    pub fn deterministic(n_states: usize, n_actions: usize, actions: &[usize]) -> Result<Self> {
        if actions.len() != n_states {
            return Err(Error::InvalidModel(format!(
                "{} actions for {n_states} states",
                actions.len()
            )));
        }
        let mut probs = Array2::zeros((n_states, n_actions));
        for (s, &a) in actions.iter().enumerate() {
            if a >= n_actions {
                return Err(Error::Domain(format!(
                    "action index {a} out of range (n_actions = {n_actions})"
                )));
            }
            probs[[s, a]] = 1.0;
        }
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &Array2<f64> {
        &self.probs
    }

    pub fn n_states(&self) -> usize {
        self.probs.nrows()
    }

    pub fn n_actions(&self) -> usize {
        self.probs.ncols()
    }
}

fn check_simplex<'a>(row: impl Iterator<Item = &'a f64>, what: &str) -> Result<()> {
    let mut sum = 0.0;
    for &p in row {
        if !p.is_finite() || p < 0.0 {
            return Err(Error::InvalidModel(format!("{what} has entry {p}")));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::InvalidModel(format!("{what} sums to {sum}")));
    }
    Ok(())
}

/// Shannon entropy of each state's action distribution, in nats.
///
/// Zero-probability actions contribute zero (the 0 ln 0 = 0 convention), so
/// deterministic rows report exactly 0.
pub fn policy_entropy(policy: &TabularPolicy) -> Array1<f64> {
    let probs = policy.probs();
    let mut h = Array1::zeros(policy.n_states());
    for s in 0..policy.n_states() {
        let mut acc = 0.0;
        for a in 0..policy.n_actions() {
            let p = probs[[s, a]];
            if p > 0.0 {
                acc -= p * p.ln();
            }
        }
        h[s] = acc;
    }
    h
}

/// Exact Q of `policy` under the entropy-shaped reward
/// r(s, a) + discount * alpha * E_{s'}[H(s')], solved directly.
///
/// The result is the fixed point of the bootstrapped evaluation backup; the
/// solve is rejected if its residual exceeds [`EVAL_RESIDUAL_TOL`].
pub fn exact_policy_eval(mdp: &TabularMDP, policy: &TabularPolicy, alpha: f64) -> Result<QTable> {
    check_compat(mdp, policy)?;
    let gamma = mdp.discount();
    let h = policy_entropy(policy);
    let mut rhat = mdp.reward().clone();
    if alpha != 0.0 {
        rhat = rhat + gamma * alpha * mdp.expected_next(&h);
    }

    // rbar[s] = E_{a~pi}[rhat(s, a)]
    let probs = policy.probs();
    let mut rbar = Array1::zeros(mdp.n_states());
    for s in 0..mdp.n_states() {
        let mut acc = 0.0;
        for a in 0..mdp.n_actions() {
            acc += probs[[s, a]] * rhat[[s, a]];
        }
        rbar[s] = acc;
    }

    let p_pi = mdp.policy_transition(policy);
    let v = solve_occupancy_system(&p_pi, &rbar, gamma, false)?;
    let q = &rhat + &(gamma * mdp.expected_next(&v));

    // Residual of the evaluation backup at the solution.
    let mut v_of_q = Array1::zeros(mdp.n_states());
    for s in 0..mdp.n_states() {
        let mut acc = 0.0;
        for a in 0..mdp.n_actions() {
            acc += probs[[s, a]] * q[[s, a]];
        }
        v_of_q[s] = acc;
    }
    let backed = &rhat + &(gamma * mdp.expected_next(&v_of_q));
    let residual = q
        .iter()
        .zip(backed.iter())
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    if !residual.is_finite() || residual > EVAL_RESIDUAL_TOL {
        return Err(Error::Numeric(format!(
            "policy evaluation residual {residual:.3e} above {EVAL_RESIDUAL_TOL:.0e}"
        )));
    }
    Ok(q)
}

/// Entropy-augmented discounted return: E over start states and first actions
/// of the evaluated Q.
pub fn discounted_return(mdp: &TabularMDP, policy: &TabularPolicy, alpha: f64) -> Result<f64> {
    let q = exact_policy_eval(mdp, policy, alpha)?;
    Ok(initial_q_expectation(mdp, policy, &q))
}

/// E_{s0 ~ rho0, a0 ~ pi}[q(s0, a0)] for an already evaluated Q table.
pub fn initial_q_expectation(mdp: &TabularMDP, policy: &TabularPolicy, q: &QTable) -> f64 {
    let probs = policy.probs();
    let mut eta = 0.0;
    for s in 0..mdp.n_states() {
        let w = mdp.initial_dist()[s];
        if w == 0.0 {
            continue;
        }
        for a in 0..mdp.n_actions() {
            eta += w * probs[[s, a]] * q[[s, a]];
        }
    }
    eta
}

/// Discounted state occupancy sum_t discount^t Pr(s_t = s), unnormalized;
/// entries sum to 1 / (1 - discount).
pub fn state_visitation(mdp: &TabularMDP, policy: &TabularPolicy) -> Result<Array1<f64>> {
    check_compat(mdp, policy)?;
    let p_pi = mdp.policy_transition(policy);
    solve_occupancy_system(&p_pi, mdp.initial_dist(), mdp.discount(), true)
}

/// A(s, a) = Q(s, a) - E_{a ~ pi}[Q(s, a)].
pub fn advantage(q: &QTable, policy: &TabularPolicy) -> Array2<f64> {
    let probs = policy.probs();
    let mut adv = q.clone();
    for s in 0..q.nrows() {
        let mut v = 0.0;
        for a in 0..q.ncols() {
            v += probs[[s, a]] * q[[s, a]];
        }
        for a in 0..q.ncols() {
            adv[[s, a]] -= v;
        }
    }
    adv
}

fn check_compat(mdp: &TabularMDP, policy: &TabularPolicy) -> Result<()> {
    if policy.n_states() != mdp.n_states() || policy.n_actions() != mdp.n_actions() {
        return Err(Error::InvalidModel(format!(
            "policy shape ({}, {}) does not match MDP ({}, {})",
            policy.n_states(),
            policy.n_actions(),
            mdp.n_states(),
            mdp.n_actions()
        )));
    }
    Ok(())
}

/// Solves (I - discount * M) x = b, or the transposed system when `transpose`.
fn solve_occupancy_system(
    m: &Array2<f64>,
    b: &Array1<f64>,
    discount: f64,
    transpose: bool,
) -> Result<Array1<f64>> {
    let n = b.len();
    let sys = nalgebra::DMatrix::from_fn(n, n, |i, j| {
        let coupling = if transpose { m[[j, i]] } else { m[[i, j]] };
        (if i == j { 1.0 } else { 0.0 }) - discount * coupling
    });
    let rhs = nalgebra::DVector::from_fn(n, |i, _| b[i]);
    let solved = sys
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numeric("singular occupancy system".into()))?;
    if solved.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("non-finite solve output".into()));
    }
    Ok(Array1::from_iter(solved.iter().copied()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{random_mdp, random_policy};
    use ndarray::array;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
        a.iter()
            .zip(b.iter())
            .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
    }

    /// Independent oracle: evaluate the policy by iterating the backup
    /// Q <- rhat + discount * P E_pi[Q] from zero, no linear solve involved.
    fn iterative_eval_oracle(
        mdp: &TabularMDP,
        policy: &TabularPolicy,
        alpha: f64,
        sweeps: usize,
    ) -> QTable {
        let gamma = mdp.discount();
        let h = policy_entropy(policy);
        let rhat = mdp.reward() + &(gamma * alpha * mdp.expected_next(&h));
        let mut q = Array2::zeros((mdp.n_states(), mdp.n_actions()));
        for _ in 0..sweeps {
            let mut v = Array1::zeros(mdp.n_states());
            for s in 0..mdp.n_states() {
                for a in 0..mdp.n_actions() {
                    v[s] += policy.probs()[[s, a]] * q[[s, a]];
                }
            }
            let next = &rhat + &(gamma * mdp.expected_next(&v));
            let delta = max_abs_diff(&q, &next);
            q = next;
            if delta < 1e-15 {
                break;
            }
        }
        q
    }

    #[test]
    fn rejects_bad_rows_and_discounts() {
        let p = Array3::from_shape_vec((1, 1, 1), vec![0.9]).unwrap();
        let r = array![[0.0]];
        let rho = array![1.0];
        assert!(matches!(
            TabularMDP::new(p.clone(), r.clone(), 0.9, rho.clone()),
            Err(Error::InvalidModel(_))
        ));

        let p1 = Array3::from_shape_vec((1, 1, 1), vec![1.0]).unwrap();
        assert!(matches!(
            TabularMDP::new(p1.clone(), r.clone(), 1.0, rho.clone()),
            Err(Error::InvalidModel(_))
        ));
        assert!(matches!(
            TabularMDP::new(p1.clone(), array![[f64::NAN]], 0.9, rho.clone()),
            Err(Error::InvalidModel(_))
        ));
        assert!(TabularMDP::new(p1, r, 0.9, rho).is_ok());

        assert!(matches!(
            TabularPolicy::new(array![[0.7, 0.4]]),
            Err(Error::InvalidModel(_))
        ));
        assert!(matches!(
            TabularPolicy::new(array![[-0.1, 1.1]]),
            Err(Error::InvalidModel(_))
        ));
    }

    #[test]
    fn entropy_known_values() {
        let uniform = TabularPolicy::uniform(3, 4);
        let h = policy_entropy(&uniform);
        for s in 0..3 {
            assert!((h[s] - 4.0f64.ln()).abs() < 1e-15, "uniform entropy is ln 4");
        }
        // Deterministic rows report exactly zero under the 0 ln 0 convention.
        let det = TabularPolicy::deterministic(2, 3, &[1, 2]).unwrap();
        assert_eq!(policy_entropy(&det), array![0.0, 0.0]);
    }

    #[test]
    fn single_state_eval_is_geometric_sum() {
        let p = Array3::from_shape_vec((1, 1, 1), vec![1.0]).unwrap();
        let mdp = TabularMDP::new(p, array![[1.0]], 0.9, array![1.0]).unwrap();
        let policy = TabularPolicy::uniform(1, 1);
        let q = exact_policy_eval(&mdp, &policy, 0.0).unwrap();
        assert!((q[[0, 0]] - 10.0).abs() < 1e-9);
        // One action means zero entropy, so alpha does not matter.
        let q = exact_policy_eval(&mdp, &policy, 2.0).unwrap();
        assert!((q[[0, 0]] - 10.0).abs() < 1e-9);
    }

    #[test]
    fn symmetric_two_state_eval_matches_closed_form() {
        // Both actions from both states land uniformly, reward 1 everywhere.
        // Under the uniform policy every next state has entropy ln 2, so
        // Q = (1 + gamma * alpha * ln 2) / (1 - gamma) in every entry.
        let p = Array3::from_elem((2, 2, 2), 0.5);
        let mdp = TabularMDP::new(p, Array2::ones((2, 2)), 0.9, array![0.5, 0.5]).unwrap();
        let policy = TabularPolicy::uniform(2, 2);
        let q = exact_policy_eval(&mdp, &policy, 0.5).unwrap();
        let expect = (1.0 + 0.9 * 0.5 * std::f64::consts::LN_2) / 0.1;
        for entry in q.iter() {
            assert!((entry - expect).abs() < 1e-9, "{entry} vs {expect}");
        }
    }

    #[test]
    fn eval_matches_iterative_oracle() {
        for (i, &alpha) in [0.0, 0.3, 1.0].iter().enumerate() {
            let mdp = random_mdp(100 + i as u64, 5, 3, 0.9).unwrap();
            let policy = random_policy(200 + i as u64, 5, 3).unwrap();
            let q = exact_policy_eval(&mdp, &policy, alpha).unwrap();
            let oracle = iterative_eval_oracle(&mdp, &policy, alpha, 1_000_000);
            assert!(
                max_abs_diff(&q, &oracle) < 1e-8,
                "direct solve disagrees with iterative oracle at alpha={alpha}"
            );
        }
    }

    #[test]
    fn return_matches_monte_carlo_oracle() {
        let mdp = random_mdp(7, 4, 3, 0.9).unwrap();
        let policy = random_policy(8, 4, 3).unwrap();
        let alpha = 0.2;
        let eta = discounted_return(&mdp, &policy, alpha).unwrap();

        // Sample-path oracle: roll trajectories, add the shaped bonus at the
        // realized next state, truncate far past float resolution.
        let gamma = mdp.discount();
        let h = policy_entropy(&policy);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let episodes = 100_000;
        let horizon = 350;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..episodes {
            let mut s = sample_index(&mut rng, mdp.initial_dist().iter().copied());
            let mut ret = 0.0;
            let mut disc = 1.0;
            for _ in 0..horizon {
                let a = sample_index(&mut rng, policy.probs().row(s).iter().copied());
                let s2 = sample_index(&mut rng, mdp.transition().slice(ndarray::s![s, a, ..]).iter().copied());
                ret += disc * (mdp.reward()[[s, a]] + gamma * alpha * h[s2]);
                disc *= gamma;
                s = s2;
            }
            sum += ret;
            sum_sq += ret * ret;
        }
        let mean = sum / episodes as f64;
        let var = (sum_sq / episodes as f64 - mean * mean).max(0.0);
        let se = (var / episodes as f64).sqrt();
        assert!(
            (eta - mean).abs() <= 3.0 * se,
            "exact return {eta} vs MC {mean} (se {se})"
        );
    }

    fn sample_index(rng: &mut ChaCha8Rng, weights: impl Iterator<Item = f64>) -> usize {
        let mut u: f64 = rng.gen();
        let mut last = 0;
        for (i, w) in weights.enumerate() {
            last = i;
            if u < w {
                return i;
            }
            u -= w;
        }
        last
    }

    #[test]
    fn visitation_of_two_state_cycle() {
        // Deterministic cycle, gamma = 0.5, all mass starting in state 0:
        // occupancy is (sum 0.25^k, 0.5 sum 0.25^k) = (4/3, 2/3).
        let p = Array3::from_shape_vec(
            (2, 1, 2),
            vec![0.0, 1.0, 1.0, 0.0],
        )
        .unwrap();
        let mdp = TabularMDP::new(p, Array2::zeros((2, 1)), 0.5, array![1.0, 0.0]).unwrap();
        let policy = TabularPolicy::uniform(2, 1);
        let rho = state_visitation(&mdp, &policy).unwrap();
        assert!((rho[0] - 4.0 / 3.0).abs() < 1e-12);
        assert!((rho[1] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn visitation_matches_truncated_sum_oracle() {
        let mdp = random_mdp(21, 6, 3, 0.9).unwrap();
        let policy = random_policy(22, 6, 3).unwrap();
        let rho = state_visitation(&mdp, &policy).unwrap();

        let total: f64 = rho.iter().sum();
        assert!((total - 1.0 / (1.0 - mdp.discount())).abs() < 1e-9);

        // sum_t gamma^t d_t with d propagated explicitly.
        let p_pi = mdp.policy_transition(&policy);
        let mut d = mdp.initial_dist().clone();
        let mut acc = Array1::<f64>::zeros(mdp.n_states());
        let mut disc = 1.0;
        for _ in 0..400 {
            acc = acc + disc * &d;
            let mut next = Array1::zeros(mdp.n_states());
            for s in 0..mdp.n_states() {
                for s2 in 0..mdp.n_states() {
                    next[s2] += d[s] * p_pi[[s, s2]];
                }
            }
            d = next;
            disc *= mdp.discount();
        }
        for s in 0..mdp.n_states() {
            assert!((rho[s] - acc[s]).abs() < 1e-8, "state {s}");
        }
    }

    #[test]
    fn advantage_is_centered() {
        let q = array![[1.0, 2.0]];
        let policy = TabularPolicy::uniform(1, 2);
        let adv = advantage(&q, &policy);
        assert_eq!(adv, array![[-0.5, 0.5]]);

        for seed in 0..20u64 {
            let policy = random_policy(seed, 7, 4).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xAD);
            let q = Array2::from_shape_fn((7, 4), |_| rng.gen_range(-5.0..5.0));
            let adv = advantage(&q, &policy);
            for s in 0..7 {
                let mean: f64 = (0..4).map(|a| policy.probs()[[s, a]] * adv[[s, a]]).sum();
                assert!(mean.abs() < 1e-12, "weighted mean {mean} at state {s}");
            }
        }
    }

    #[test]
    fn eval_rejects_mismatched_policy() {
        let mdp = random_mdp(31, 4, 2, 0.9).unwrap();
        let policy = TabularPolicy::uniform(4, 3);
        assert!(matches!(
            exact_policy_eval(&mdp, &policy, 0.0),
            Err(Error::InvalidModel(_))
        ));
    }
}
