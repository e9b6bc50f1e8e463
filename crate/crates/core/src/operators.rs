//! Bellman operators for the entropy-augmented control problem and the
//! audits that pin their contracts down numerically.
//!
//! Two evaluation operators are kept deliberately separate even though they
//! agree in exact arithmetic:
//!
//! * the soft backup folds the temperature-weighted log-probability into the
//!   action expectation, `E_a'[Q - alpha ln pi]`;
//! * the bootstrapped backup adds the entropy as a state bonus,
//!   `E_a'[Q] + alpha H(s')`.
//!
//! Their agreement per application and at the fixed point is itself an
//! audited claim, so neither implementation is expressed through the other.
//!
//! The optimal backup treats the entropy bonus as data: a frozen per-state
//! entropy table makes each application an exact discount-factor contraction.
//! `value_iteration` closes the loop by re-deriving that table from the
//! temperature-matched softmax policy between sweeps and then polishing with
//! the table frozen, so its output is the exact fixed point for an entropy
//! table that is (numerically) self-consistent.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mdp::{
    advantage, discounted_return, exact_policy_eval, initial_q_expectation, policy_entropy,
    state_visitation, QTable, TabularMDP, TabularPolicy, ValueTable,
};

/// Iteration cap for fixed-point loops; hitting it is a defect, not a tuning
/// problem, because every loop here contracts at rate discount < 1.
pub const ITERATION_CAP: usize = 1_000_000;

/// Residual at which an iterated Q table counts as a fixed point.
pub const FIXED_POINT_RESIDUAL: f64 = 1e-12;

/// Which backup family an audit exercised.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackupKind {
    Soft,
    Bootstrap,
    PolicyValue,
    OptimalValue,
}

impl std::fmt::Display for BackupKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            BackupKind::Soft => "soft",
            BackupKind::Bootstrap => "bootstrap",
            BackupKind::PolicyValue => "policy-value",
            BackupKind::OptimalValue => "optimal-value",
        };
        f.write_str(name)
    }
}

/// One checked inequality or identity, with enough context to be replayed.
#[derive(Debug, Clone)]
pub struct BoundReport {
    pub descriptor: String,
    pub lhs: f64,
    pub rhs: f64,
    /// lhs - rhs.
    pub slack: f64,
    pub tolerance: f64,
    pub violated: bool,
}

impl BoundReport {
    /// Checks `lhs >= rhs - tolerance`.
    pub fn bound(descriptor: impl Into<String>, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        let slack = lhs - rhs;
        Self {
            descriptor: descriptor.into(),
            lhs,
            rhs,
            slack,
            tolerance,
            violated: !(slack >= -tolerance),
        }
    }

    /// Checks `|lhs - rhs| <= tolerance`.
    pub fn identity(descriptor: impl Into<String>, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        let slack = lhs - rhs;
        Self {
            descriptor: descriptor.into(),
            lhs,
            rhs,
            slack,
            tolerance,
            violated: !(slack.abs() <= tolerance),
        }
    }
}

impl std::fmt::Display for BoundReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}: lhs={:.12e} rhs={:.12e} slack={:.3e} tol={:.1e} {}",
            self.descriptor,
            self.lhs,
            self.rhs,
            self.slack,
            self.tolerance,
            if self.violated { "VIOLATED" } else { "ok" }
        )
    }
}

/// ln sum exp with max subtraction.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    if !m.is_finite() {
        return m;
    }
    let s: f64 = xs.iter().map(|&x| (x - m).exp()).sum();
    m + s.ln()
}

/// Overwrites `xs` with softmax(xs), max-subtracted.
pub fn softmax_in_place(xs: &mut [f64]) {
    let m = xs.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let mut sum = 0.0;
    for x in xs.iter_mut() {
        *x = (*x - m).exp();
        sum += *x;
    }
    for x in xs.iter_mut() {
        *x /= sum;
    }
}

fn check_shapes(mdp: &TabularMDP, policy: &TabularPolicy, q: Option<&QTable>) -> Result<()> {
    if policy.n_states() != mdp.n_states() || policy.n_actions() != mdp.n_actions() {
        return Err(Error::InvalidModel(format!(
            "policy shape ({}, {}) does not match MDP ({}, {})",
            policy.n_states(),
            policy.n_actions(),
            mdp.n_states(),
            mdp.n_actions()
        )));
    }
    if let Some(q) = q {
        if q.dim() != (mdp.n_states(), mdp.n_actions()) {
            return Err(Error::InvalidModel(format!(
                "Q shape {:?} does not match MDP ({}, {})",
                q.dim(),
                mdp.n_states(),
                mdp.n_actions()
            )));
        }
    }
    Ok(())
}

/// Soft evaluation backup:
/// (TQ)(s, a) = r(s, a) + discount * E_{s'}[ E_{a' ~ pi}[Q(s', a') - alpha ln pi(a'|s')] ].
///
/// Zero-probability actions contribute nothing, extending 0 ln 0 = 0.
pub fn soft_backup(
    q: &QTable,
    mdp: &TabularMDP,
    policy: &TabularPolicy,
    alpha: f64,
) -> Result<QTable> {
    check_shapes(mdp, policy, Some(q))?;
    let probs = policy.probs();
    let mut inner = Array1::zeros(mdp.n_states());
    for s in 0..mdp.n_states() {
        let mut acc = 0.0;
        for a in 0..mdp.n_actions() {
            let p = probs[[s, a]];
            if p > 0.0 {
                acc += p * (q[[s, a]] - alpha * p.ln());
            }
        }
        inner[s] = acc;
    }
    Ok(mdp.reward() + &(mdp.discount() * mdp.expected_next(&inner)))
}

/// Bootstrapped evaluation backup:
/// (TQ)(s, a) = r(s, a) + discount * E_{s'}[ E_{a' ~ pi}[Q(s', a')] + alpha H(s') ].
pub fn bootstrap_backup(
    q: &QTable,
    mdp: &TabularMDP,
    policy: &TabularPolicy,
    alpha: f64,
) -> Result<QTable> {
    check_shapes(mdp, policy, Some(q))?;
    let probs = policy.probs();
    let h = policy_entropy(policy);
    let mut inner = Array1::zeros(mdp.n_states());
    for s in 0..mdp.n_states() {
        let mut v = 0.0;
        for a in 0..mdp.n_actions() {
            v += probs[[s, a]] * q[[s, a]];
        }
        inner[s] = v + alpha * h[s];
    }
    Ok(mdp.reward() + &(mdp.discount() * mdp.expected_next(&inner)))
}

/// State-value backup under a policy, with the shaped reward
/// rhat = r + discount * alpha * E_{s'}[H(s')] taken from that policy:
/// (TV)(s) = E_{a ~ pi}[rhat(s, a) + discount * E_{s'}[V(s')]].
pub fn policy_v_backup(
    v: &ValueTable,
    mdp: &TabularMDP,
    policy: &TabularPolicy,
    alpha: f64,
) -> Result<ValueTable> {
    check_shapes(mdp, policy, None)?;
    let h = policy_entropy(policy);
    let combined = v + &(alpha * &h);
    let backed = mdp.expected_next(&combined);
    let probs = policy.probs();
    let mut out = Array1::zeros(mdp.n_states());
    for s in 0..mdp.n_states() {
        let mut acc = 0.0;
        for a in 0..mdp.n_actions() {
            acc += probs[[s, a]] * (mdp.reward()[[s, a]] + mdp.discount() * backed[[s, a]]);
        }
        out[s] = acc;
    }
    Ok(out)
}

/// Optimal state-value backup with the entropy bonus supplied as a frozen
/// table: (TV)(s) = max_a [ r(s, a) + discount * E_{s'}[V(s') + alpha h(s')] ].
///
/// Freezing `entropy` is what makes a single application an exact
/// discount-factor contraction; re-deriving the table between sweeps is the
/// job of [`value_iteration`].
pub fn optimal_v_backup(
    v: &ValueTable,
    mdp: &TabularMDP,
    entropy: &Array1<f64>,
    alpha: f64,
) -> Result<ValueTable> {
    if entropy.len() != mdp.n_states() || v.len() != mdp.n_states() {
        return Err(Error::InvalidModel(
            "value or entropy table length does not match MDP".into(),
        ));
    }
    let combined = v + &(alpha * entropy);
    let backed = mdp.expected_next(&combined);
    let mut out = Array1::zeros(mdp.n_states());
    for s in 0..mdp.n_states() {
        let mut best = f64::NEG_INFINITY;
        for a in 0..mdp.n_actions() {
            best = best.max(mdp.reward()[[s, a]] + mdp.discount() * backed[[s, a]]);
        }
        out[s] = best;
    }
    Ok(out)
}

/// Solution of the optimal control problem at a given temperature.
#[derive(Debug, Clone)]
pub struct ViSolution {
    /// Optimal values (entropy bonus accrues from successor states onward).
    pub value: ValueTable,
    /// Greedy policy over the final augmented Q, lowest index on ties.
    pub policy: TabularPolicy,
    /// Final augmented Q table: r + discount * E_{s'}[V + alpha h].
    pub q: QTable,
    /// The self-consistent entropy table the solve settled on.
    pub entropy: Array1<f64>,
    /// Sweeps spent across both phases.
    pub sweeps: usize,
}

/// Optimal values by value iteration.
///
/// Sweeps stop once `||V_{k+1} - V_k||_inf <= tol * (1 - discount) / discount`,
/// which guarantees the returned values are within `tol` of the fixed point.
///
/// At alpha > 0 the entropy table is recomputed between sweeps from the
/// softmax policy of the current augmented Q at temperature alpha. Ties make
/// that recomputation a non-expansive step only approximately, so after the
/// coupled phase settles the table is frozen and the contraction is run to
/// tolerance, making the output an exact fixed point for the reported table.
/// At alpha = 0 the table is identically zero and this is plain value
/// iteration.
pub fn value_iteration(mdp: &TabularMDP, alpha: f64, tol: f64) -> Result<ViSolution> {
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("tolerance {tol} must be positive")));
    }
    if alpha < 0.0 {
        return Err(Error::Domain(format!("temperature {alpha} negative")));
    }
    let gamma = mdp.discount();
    let threshold = if gamma > 0.0 {
        tol * (1.0 - gamma) / gamma
    } else {
        f64::INFINITY
    };

    let n = mdp.n_states();
    let m = mdp.n_actions();
    let mut v: ValueTable = Array1::zeros(n);
    let mut h: Array1<f64> = Array1::zeros(n);
    let mut sweeps = 0usize;

    let augmented_q = |v: &ValueTable, h: &Array1<f64>| -> QTable {
        let combined = v + &(alpha * h);
        mdp.reward() + &(gamma * mdp.expected_next(&combined))
    };

    // Coupled phase: sweep the max backup and re-derive the entropy table.
    if alpha > 0.0 {
        const COUPLED_CAP: usize = 200_000;
        loop {
            let q = augmented_q(&v, &h);
            let mut v_next = Array1::zeros(n);
            let mut h_next = Array1::zeros(n);
            let mut row = vec![0.0; m];
            for s in 0..n {
                let mut best = f64::NEG_INFINITY;
                for a in 0..m {
                    row[a] = q[[s, a]] / alpha;
                    best = best.max(q[[s, a]]);
                }
                v_next[s] = best;
                softmax_in_place(&mut row);
                let mut ent = 0.0;
                for &p in row.iter() {
                    if p > 0.0 {
                        ent -= p * p.ln();
                    }
                }
                h_next[s] = ent;
            }
            let dv = max_abs_delta(&v, &v_next);
            let dh = max_abs_delta(&h, &h_next);
            v = v_next;
            h = h_next;
            sweeps += 1;
            if dv.max(alpha * dh) <= threshold || sweeps >= COUPLED_CAP {
                break;
            }
        }
    }

    // Frozen phase: exact contraction for the settled entropy table.
    loop {
        let v_next = optimal_v_backup(&v, mdp, &h, alpha)?;
        let dv = max_abs_delta(&v, &v_next);
        v = v_next;
        sweeps += 1;
        if dv <= threshold {
            break;
        }
        if sweeps >= ITERATION_CAP {
            return Err(Error::Convergence(sweeps));
        }
    }

    let q = augmented_q(&v, &h);
    let mut actions = Vec::with_capacity(n);
    for s in 0..n {
        let mut best = 0usize;
        for a in 1..m {
            if q[[s, a]] > q[[s, best]] {
                best = a;
            }
        }
        actions.push(best);
    }
    let policy = TabularPolicy::deterministic(n, m, &actions)?;
    Ok(ViSolution {
        value: v,
        policy,
        q,
        entropy: h,
        sweeps,
    })
}

fn max_abs_delta(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .fold(0.0f64, |mx, (x, y)| mx.max((x - y).abs()))
}

/// Temperature-matched softmax improvement: pi'(a|s) proportional to
/// exp(Q(s, a) / alpha), max-subtracted per row.
///
/// alpha = 0 has no softmax target; callers wanting the greedy limit should
/// take an argmax instead, so that case is a domain error here.
pub fn soft_improvement_step(q: &QTable, alpha: f64) -> Result<TabularPolicy> {
    if !(alpha > 0.0) {
        return Err(Error::Domain(format!(
            "temperature {alpha} must be strictly positive for the softmax projection"
        )));
    }
    let (n, m) = q.dim();
    let mut probs = Array2::zeros((n, m));
    let mut row = vec![0.0; m];
    for s in 0..n {
        for a in 0..m {
            row[a] = q[[s, a]] / alpha;
        }
        softmax_in_place(&mut row);
        for a in 0..m {
            probs[[s, a]] = row[a];
        }
    }
    TabularPolicy::new(probs)
}

/// Largest per-state KL divergence max_s KL(p(.|s) || q(.|s)), in nats.
///
/// Terms with p = 0 contribute zero; p > 0 against q = 0 yields infinity,
/// which callers report but exclude from bound checks.
pub fn max_kl(p: &TabularPolicy, q: &TabularPolicy) -> f64 {
    let mut worst = 0.0f64;
    for s in 0..p.n_states() {
        let mut kl = 0.0;
        for a in 0..p.n_actions() {
            let pp = p.probs()[[s, a]];
            if pp > 0.0 {
                let qq = q.probs()[[s, a]];
                if qq == 0.0 {
                    return f64::INFINITY;
                }
                kl += pp * (pp / qq).ln();
            }
        }
        worst = worst.max(kl);
    }
    worst
}

/// Iterates an evaluation backup to [`FIXED_POINT_RESIDUAL`].
pub fn iterate_to_fixed_point(
    mut step: impl FnMut(&QTable) -> Result<QTable>,
    init: QTable,
) -> Result<QTable> {
    let mut q = init;
    for _ in 0..ITERATION_CAP {
        let next = step(&q)?;
        let residual = q
            .iter()
            .zip(next.iter())
            .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        q = next;
        if residual <= FIXED_POINT_RESIDUAL {
            return Ok(q);
        }
    }
    Err(Error::Convergence(ITERATION_CAP))
}

/// Checks ||T V1 - T V2||_inf <= discount * ||V1 - V2||_inf for both the
/// policy and the optimal value backup on random value pairs.
///
/// The optimal backup's entropy table is frozen from the trial's reference
/// policy; the policy backup derives everything from the same policy.
pub fn contraction_audit(
    mdp: &TabularMDP,
    alpha: f64,
    trials: usize,
    seed: u64,
) -> Result<Vec<BoundReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gamma = mdp.discount();
    let mut reports = Vec::with_capacity(2 * trials);
    for trial in 0..trials {
        let policy = crate::envs::random_policy(rng.gen(), mdp.n_states(), mdp.n_actions())?;
        let v1 = Array1::from_shape_fn(mdp.n_states(), |_| rng.gen_range(-10.0..10.0));
        let v2 = Array1::from_shape_fn(mdp.n_states(), |_| rng.gen_range(-10.0..10.0));
        let dv = max_abs_delta(&v1, &v2);

        let t1 = policy_v_backup(&v1, mdp, &policy, alpha)?;
        let t2 = policy_v_backup(&v2, mdp, &policy, alpha)?;
        reports.push(BoundReport::bound(
            format!("contraction {} trial {trial} alpha {alpha}", BackupKind::PolicyValue),
            gamma * dv,
            max_abs_delta(&t1, &t2),
            1e-9,
        ));

        let h = policy_entropy(&policy);
        let t1 = optimal_v_backup(&v1, mdp, &h, alpha)?;
        let t2 = optimal_v_backup(&v2, mdp, &h, alpha)?;
        reports.push(BoundReport::bound(
            format!("contraction {} trial {trial} alpha {alpha}", BackupKind::OptimalValue),
            gamma * dv,
            max_abs_delta(&t1, &t2),
            1e-9,
        ));
    }
    Ok(reports)
}

/// Checks that the soft and bootstrapped backups agree per application and
/// at their fixed points.
pub fn conjugacy_audit(
    mdp: &TabularMDP,
    policy: &TabularPolicy,
    alpha: f64,
    seed: u64,
) -> Result<Vec<BoundReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q0 = Array2::from_shape_fn((mdp.n_states(), mdp.n_actions()), |_| {
        rng.gen_range(-5.0..5.0)
    });

    let soft_once = soft_backup(&q0, mdp, policy, alpha)?;
    let boot_once = bootstrap_backup(&q0, mdp, policy, alpha)?;
    let app_gap = soft_once
        .iter()
        .zip(boot_once.iter())
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));

    let soft_fp = iterate_to_fixed_point(|q| soft_backup(q, mdp, policy, alpha), q0.clone())?;
    let boot_fp = iterate_to_fixed_point(|q| bootstrap_backup(q, mdp, policy, alpha), q0)?;
    let fp_gap = soft_fp
        .iter()
        .zip(boot_fp.iter())
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));

    Ok(vec![
        BoundReport::identity(
            format!("conjugacy single application alpha {alpha}"),
            app_gap,
            0.0,
            1e-12,
        ),
        BoundReport::identity(
            format!("conjugacy fixed points alpha {alpha}"),
            fp_gap,
            0.0,
            1e-8,
        ),
    ])
}

/// Checks ||Vtilde* - V*||_inf <= discount / (1 - discount) * alpha * ln(n_actions).
pub fn optimal_error_bound_audit(mdp: &TabularMDP, alpha: f64, tol: f64) -> Result<BoundReport> {
    let shaped = value_iteration(mdp, alpha, tol)?;
    let plain = value_iteration(mdp, 0.0, tol)?;
    let gap = max_abs_delta(&shaped.value, &plain.value);
    let gamma = mdp.discount();
    let bound = gamma / (1.0 - gamma) * alpha * mdp.entropy_cap();
    Ok(BoundReport::bound(
        format!("optimal value shift bound alpha {alpha}"),
        bound,
        gap,
        1e-9,
    ))
}

/// Report from one run of exact soft policy iteration.
#[derive(Debug, Clone)]
pub struct SoftPiReport {
    /// Per-round pointwise improvement checks, Q_{k+1} >= Q_k.
    pub rounds: Vec<BoundReport>,
    /// Distance from the last requested round to the iteration's own limit.
    pub fixed_point_gap: BoundReport,
    /// Q after the requested rounds.
    pub final_q: QTable,
    /// Policy after the requested rounds.
    pub final_policy: TabularPolicy,
}

impl SoftPiReport {
    pub fn violated(&self) -> bool {
        self.fixed_point_gap.violated || self.rounds.iter().any(|r| r.violated)
    }
}

/// Alternates exact evaluation with the softmax improvement step, checking
/// pointwise monotonicity each round and convergence to the iteration's own
/// fixed point afterwards.
pub fn soft_policy_iteration_audit(
    mdp: &TabularMDP,
    init: &TabularPolicy,
    alpha: f64,
    rounds: usize,
) -> Result<SoftPiReport> {
    let mut policy = init.clone();
    let mut q = exact_policy_eval(mdp, &policy, alpha)?;
    let mut reports = Vec::with_capacity(rounds);
    for round in 0..rounds {
        policy = soft_improvement_step(&q, alpha)?;
        let q_next = exact_policy_eval(mdp, &policy, alpha)?;
        let min_slack = q_next
            .iter()
            .zip(q.iter())
            .map(|(next, prev)| next - prev)
            .fold(f64::INFINITY, f64::min);
        reports.push(BoundReport::bound(
            format!("soft improvement round {round} alpha {alpha}"),
            min_slack,
            0.0,
            1e-10,
        ));
        q = q_next;
    }

    // Let the iteration run on until it stops moving; the requested rounds
    // should already be within 1e-6 of that limit.
    let final_q = q.clone();
    let final_policy = policy.clone();
    let mut gap_to_limit = 0.0f64;
    for _ in 0..200 {
        policy = soft_improvement_step(&q, alpha)?;
        let q_next = exact_policy_eval(mdp, &policy, alpha)?;
        let delta = q_next
            .iter()
            .zip(q.iter())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        q = q_next;
        if delta <= 1e-13 {
            break;
        }
    }
    for (a, b) in final_q.iter().zip(q.iter()) {
        gap_to_limit = gap_to_limit.max((a - b).abs());
    }
    let fixed_point_gap = BoundReport::bound(
        format!("soft policy iteration settles alpha {alpha}"),
        1e-6,
        gap_to_limit,
        0.0,
    );
    Ok(SoftPiReport {
        rounds: reports,
        fixed_point_gap,
        final_q,
        final_policy,
    })
}

/// Checks the exact return-difference identity between two policies:
/// eta(new) = eta(old) + E_{rho_new, new}[A_old(s, a)
///                                        + discount * alpha * E_{s'}[dH(s')]]
/// where dH is the entropy difference table between the policies.
/// At alpha = 0 this is the classical advantage-over-visitation identity.
pub fn perf_diff_audit(
    mdp: &TabularMDP,
    pi_old: &TabularPolicy,
    pi_new: &TabularPolicy,
    alpha: f64,
) -> Result<BoundReport> {
    let q_old = exact_policy_eval(mdp, pi_old, alpha)?;
    let a_old = advantage(&q_old, pi_old);
    let eta_old = initial_q_expectation(mdp, pi_old, &q_old);
    let eta_new = discounted_return(mdp, pi_new, alpha)?;
    let rho_new = state_visitation(mdp, pi_new)?;

    let gamma = mdp.discount();
    let correction = if alpha == 0.0 {
        Array2::zeros((mdp.n_states(), mdp.n_actions()))
    } else {
        let dh = &policy_entropy(pi_new) - &policy_entropy(pi_old);
        gamma * alpha * mdp.expected_next(&dh)
    };

    let probs = pi_new.probs();
    let mut total = 0.0;
    for s in 0..mdp.n_states() {
        for a in 0..mdp.n_actions() {
            total += rho_new[s] * probs[[s, a]] * (a_old[[s, a]] + correction[[s, a]]);
        }
    }
    Ok(BoundReport::identity(
        format!("return difference identity alpha {alpha}"),
        eta_new,
        eta_old + total,
        1e-8,
    ))
}

/// Surrogate-objective audit around a policy pair.
#[derive(Debug, Clone)]
pub struct SurrogateReport {
    /// eta(new) >= Lhat - 2 eps gamma / (1-gamma)^2 * zeta. Asserted.
    pub linear: BoundReport,
    /// eta(new) >= Lhat - 4 eps gamma / (1-gamma)^2 * zeta^2. Diagnostic only:
    /// a squared max-KL penalty is tighter than the total-variation argument
    /// supports, so violations here are recorded, not failed.
    pub quadratic: BoundReport,
    /// Largest per-state KL(old || new).
    pub zeta: f64,
    /// Largest augmented advantage magnitude of the old policy.
    pub epsilon: f64,
    /// eta(new) - Lhat: the cost of evaluating the surrogate under the old
    /// policy's visitation instead of the new one's.
    pub visitation_gap: f64,
}

/// Computes the old-visitation surrogate
/// Lhat = eta(old) + E_{rho_old, new}[A_old + discount * alpha * E_{s'}[dH]]
/// and checks the penalized lower bounds on eta(new).
pub fn surrogate_bound_audit(
    mdp: &TabularMDP,
    pi_old: &TabularPolicy,
    pi_new: &TabularPolicy,
    alpha: f64,
) -> Result<SurrogateReport> {
    let q_old = exact_policy_eval(mdp, pi_old, alpha)?;
    let a_old = advantage(&q_old, pi_old);
    let eta_old = initial_q_expectation(mdp, pi_old, &q_old);
    let eta_new = discounted_return(mdp, pi_new, alpha)?;
    let rho_old = state_visitation(mdp, pi_old)?;

    let gamma = mdp.discount();
    let correction = if alpha == 0.0 {
        Array2::zeros((mdp.n_states(), mdp.n_actions()))
    } else {
        let dh = &policy_entropy(pi_new) - &policy_entropy(pi_old);
        gamma * alpha * mdp.expected_next(&dh)
    };

    let probs = pi_new.probs();
    let mut l_hat = eta_old;
    for s in 0..mdp.n_states() {
        for a in 0..mdp.n_actions() {
            l_hat += rho_old[s] * probs[[s, a]] * (a_old[[s, a]] + correction[[s, a]]);
        }
    }

    let epsilon = a_old.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    let zeta = max_kl(pi_old, pi_new);
    let scale = gamma / ((1.0 - gamma) * (1.0 - gamma));
    let (linear, quadratic) = if zeta.is_finite() {
        (
            BoundReport::bound(
                format!("surrogate lower bound, linear KL penalty, alpha {alpha}"),
                eta_new,
                l_hat - 2.0 * epsilon * scale * zeta,
                1e-9,
            ),
            BoundReport::bound(
                format!("surrogate lower bound, squared KL penalty, alpha {alpha}"),
                eta_new,
                l_hat - 4.0 * epsilon * scale * zeta * zeta,
                1e-9,
            ),
        )
    } else {
        // Disjoint supports: the penalty is vacuous. Reported, never failed.
        (
            BoundReport::bound(
                format!("surrogate lower bound, linear KL penalty, alpha {alpha} (infinite KL, excluded)"),
                eta_new,
                f64::NEG_INFINITY,
                1e-9,
            ),
            BoundReport::bound(
                format!("surrogate lower bound, squared KL penalty, alpha {alpha} (infinite KL, excluded)"),
                eta_new,
                f64::NEG_INFINITY,
                1e-9,
            ),
        )
    };
    Ok(SurrogateReport {
        linear,
        quadratic,
        zeta,
        epsilon,
        visitation_gap: eta_new - l_hat,
    })
}

/// Relates the three exact expressions of the entropy-regularized objective:
///
/// (a) occupancy-weighted reward plus alpha H at the visited state;
/// (b) occupancy-weighted reward plus discounted alpha H at successor states;
/// (c) start-state expectation of the soft backup's fixed point.
///
/// (b) and (c) are the same objective through two routes; (a) exceeds them by
/// exactly alpha times the expected start-state entropy.
pub fn soft_objective_audit(
    mdp: &TabularMDP,
    policy: &TabularPolicy,
    alpha: f64,
) -> Result<Vec<BoundReport>> {
    check_shapes(mdp, policy, None)?;
    let gamma = mdp.discount();
    let h = policy_entropy(policy);
    let rho = state_visitation(mdp, policy)?;
    let probs = policy.probs();

    let mut j_every_state = 0.0; // (a)
    let mut eta_successor = 0.0; // (b)
    let bonus = mdp.expected_next(&h);
    for s in 0..mdp.n_states() {
        let mut r_mean = 0.0;
        let mut bonus_mean = 0.0;
        for a in 0..mdp.n_actions() {
            r_mean += probs[[s, a]] * mdp.reward()[[s, a]];
            bonus_mean += probs[[s, a]] * bonus[[s, a]];
        }
        j_every_state += rho[s] * (r_mean + alpha * h[s]);
        eta_successor += rho[s] * (r_mean + gamma * alpha * bonus_mean);
    }

    let q0 = Array2::zeros((mdp.n_states(), mdp.n_actions()));
    let soft_fp = iterate_to_fixed_point(|q| soft_backup(q, mdp, policy, alpha), q0)?;
    let eta_soft = initial_q_expectation(mdp, policy, &soft_fp);

    let start_entropy: f64 = mdp
        .initial_dist()
        .iter()
        .zip(h.iter())
        .map(|(w, hh)| w * hh)
        .sum();

    Ok(vec![
        BoundReport::identity(
            format!("successor-entropy objective vs soft fixed point, alpha {alpha}"),
            eta_successor,
            eta_soft,
            1e-8,
        ),
        BoundReport::identity(
            format!("every-state vs successor-entropy objective gap, alpha {alpha}"),
            j_every_state - eta_successor,
            alpha * start_entropy,
            1e-8,
        ),
    ])
}
