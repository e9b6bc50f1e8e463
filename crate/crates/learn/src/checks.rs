//! Finite-difference audits of the analytic gradients used by the learners.
//!
//! Each path builds small MLP instances at random parameter points, evaluates
//! the analytic gradient, and compares directional derivatives against
//! central differences. Batches are constructed to keep every item away from
//! the clip kinks so the objective is differentiable at the probed point.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::model::{
    directional_fd_error, entropy_of_logits, log_softmax, Net, NetGrads,
};
use crate::ppo::{surrogate_and_grad, value_loss_and_grad, BatchItem};
use crate::sac::projection_loss_and_grad;

pub const FD_EPS: f64 = 1e-5;
pub const FD_TOL: f64 = 1e-5;

const OBS_DIM: usize = 6;
const N_ACTIONS: usize = 3;
const BATCH: usize = 8;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub path: String,
    pub points: usize,
    pub max_rel_err: f64,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn violated(&self) -> bool {
        !self.max_rel_err.is_finite() || self.max_rel_err > self.tolerance
    }
}

impl std::fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}: max rel err {:.3e} over {} points (tol {:.0e})",
            self.path, self.max_rel_err, self.points, self.tolerance
        )
    }
}

fn median3(mut v: [f64; 3]) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite errors"));
    v[1]
}

/// Median over three random directions. A single direction can land nearly
/// orthogonal to the gradient, where the quotient is all rounding noise; a
/// real analytic bug shows up along every direction.
fn fd_check(
    loss: &mut dyn FnMut(&mut Net) -> f64,
    net: &mut Net,
    grads: &NetGrads,
    seed: u64,
) -> f64 {
    median3([
        directional_fd_error(loss, net, grads, seed, FD_EPS),
        directional_fd_error(loss, net, grads, seed ^ 0xA5A5, FD_EPS),
        directional_fd_error(loss, net, grads, seed ^ 0x5A5A, FD_EPS),
    ])
}

fn rand_vec(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Batch with every ratio at least 1e-3 from the clip boundaries and every
/// augmented advantage at least 0.05 from zero, so an FD_EPS parameter step
/// cannot switch min() branches.
fn surrogate_batch(
    policy: &Net,
    rng: &mut ChaCha8Rng,
    clip_ratio: f64,
    gamma: f64,
    alpha: f64,
    zero_advantage: bool,
) -> Vec<BatchItem> {
    let mut items = Vec::with_capacity(BATCH);
    while items.len() < BATCH {
        let obs = rand_vec(rng, OBS_DIM);
        let next_obs = rand_vec(rng, OBS_DIM);
        let action = rng.gen_range(0..N_ACTIONS);
        let ratio: f64 = rng.gen_range(0.7..1.4);
        if (ratio - (1.0 - clip_ratio)).abs() < 1e-3
            || (ratio - (1.0 + clip_ratio)).abs() < 1e-3
        {
            continue;
        }
        let advantage = if zero_advantage {
            0.0
        } else {
            rng.gen_range(-2.0..2.0)
        };
        let h_next = entropy_of_logits(&policy.forward(0, &next_obs));
        if !zero_advantage && (advantage + gamma * alpha * h_next).abs() < 0.05 {
            continue;
        }
        let lp = log_softmax(&policy.forward(0, &obs));
        items.push(BatchItem {
            obs_id: 0,
            obs,
            next_obs_id: 0,
            next_obs,
            action,
            log_prob_old: lp[action] - ratio.ln(),
            advantage,
            value_target: rng.gen_range(-2.0..2.0),
            terminal: false,
            weight: 1.0 / BATCH as f64,
        });
    }
    items
}

fn value_batch(rng: &mut ChaCha8Rng) -> Vec<BatchItem> {
    (0..BATCH)
        .map(|_| BatchItem {
            obs_id: 0,
            obs: rand_vec(rng, OBS_DIM),
            next_obs_id: 0,
            next_obs: vec![0.0; OBS_DIM],
            action: 0,
            log_prob_old: 0.0,
            advantage: 0.0,
            value_target: rng.gen_range(-2.0..2.0),
            terminal: false,
            weight: 1.0 / BATCH as f64,
        })
        .collect()
}

/// Checks all four gradient paths at `points` random parameter points each:
/// the clipped surrogate with augmentation active, the augmentation term in
/// isolation (zero advantages, no effective clip), the temperature-scaled
/// projection loss, and value regression.
pub fn gradient_check_suite(points: usize, seed: u64) -> Result<Vec<GradCheckReport>> {
    let mut reports = Vec::with_capacity(4);

    let mut worst = 0.0f64;
    for k in 0..points {
        let pseed = seed.wrapping_add(1 + 17 * k as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(pseed ^ 0x00C0_FFEE);
        let mut policy = Net::mlp(OBS_DIM, N_ACTIONS, pseed);
        let (gamma, alpha, clip) = (0.9, 0.3, 0.2);
        let items = surrogate_batch(&policy, &mut rng, clip, gamma, alpha, false);
        let eval = surrogate_and_grad(&items, &policy, clip, gamma, alpha, true)?;
        let mut loss = |net: &mut Net| {
            surrogate_and_grad(&items, net, clip, gamma, alpha, true)
                .expect("surrogate eval")
                .policy_loss
        };
        worst = worst.max(fd_check(&mut loss, &mut policy, &eval.grads, pseed ^ 0xD1));
    }
    reports.push(GradCheckReport {
        path: "ppo-clipped-surrogate".into(),
        points,
        max_rel_err: worst,
        tolerance: FD_TOL,
    });

    let mut worst = 0.0f64;
    for k in 0..points {
        let pseed = seed.wrapping_add(2 + 23 * k as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(pseed ^ 0x00BA_5E11);
        let mut policy = Net::mlp(OBS_DIM, N_ACTIONS, pseed ^ 0x7);
        let (gamma, alpha, clip) = (0.9, 0.5, 1e9);
        let items = surrogate_batch(&policy, &mut rng, clip, gamma, alpha, true);
        let eval = surrogate_and_grad(&items, &policy, clip, gamma, alpha, true)?;
        let mut loss = |net: &mut Net| {
            surrogate_and_grad(&items, net, clip, gamma, alpha, true)
                .expect("surrogate eval")
                .policy_loss
        };
        worst = worst.max(fd_check(&mut loss, &mut policy, &eval.grads, pseed ^ 0xD2));
    }
    reports.push(GradCheckReport {
        path: "entropy-augmentation".into(),
        points,
        max_rel_err: worst,
        tolerance: FD_TOL,
    });

    let mut worst = 0.0f64;
    for k in 0..points {
        let pseed = seed.wrapping_add(3 + 29 * k as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(pseed ^ 0x0057_A7E5);
        let q_net = Net::mlp(OBS_DIM, N_ACTIONS, pseed ^ 0x11);
        let mut policy = Net::mlp(OBS_DIM, N_ACTIONS, pseed ^ 0x13);
        let alpha = 0.7;
        let states: Vec<(usize, Vec<f64>)> =
            (0..BATCH).map(|_| (0, rand_vec(&mut rng, OBS_DIM))).collect();
        let (_, grads) = projection_loss_and_grad(&states, &q_net, &policy, alpha)?;
        let mut loss = |net: &mut Net| {
            projection_loss_and_grad(&states, &q_net, net, alpha)
                .expect("projection eval")
                .0
        };
        worst = worst.max(fd_check(&mut loss, &mut policy, &grads, pseed ^ 0xD3));
    }
    reports.push(GradCheckReport {
        path: "kl-projection".into(),
        points,
        max_rel_err: worst,
        tolerance: FD_TOL,
    });

    let mut worst = 0.0f64;
    for k in 0..points {
        let pseed = seed.wrapping_add(4 + 31 * k as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(pseed ^ 0x00FA_Cade);
        let mut value = Net::mlp(OBS_DIM, 1, pseed ^ 0x17);
        let items = value_batch(&mut rng);
        let (_, grads) = value_loss_and_grad(&items, &value)?;
        let mut loss = |net: &mut Net| {
            value_loss_and_grad(&items, net).expect("value eval").0
        };
        worst = worst.max(fd_check(&mut loss, &mut value, &grads, pseed ^ 0xD4));
    }
    reports.push(GradCheckReport {
        path: "value-regression".into(),
        points,
        max_rel_err: worst,
        tolerance: FD_TOL,
    });

    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_paths_pass_at_a_few_points() {
        let reports = gradient_check_suite(3, 11).expect("suite runs");
        let names: Vec<&str> = reports.iter().map(|r| r.path.as_str()).collect();
        assert_eq!(
            names,
            vec![
                "ppo-clipped-surrogate",
                "entropy-augmentation",
                "kl-projection",
                "value-regression"
            ]
        );
        for r in &reports {
            assert!(!r.violated(), "{r}");
        }
    }

    #[test]
    fn a_corrupted_gradient_is_flagged() {
        // Negative control: a gradient off by 1.5x must fail the check.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut value = Net::mlp(OBS_DIM, 1, 5);
        let items = value_batch(&mut rng);
        let mut scaled = items.clone();
        for it in &mut scaled {
            it.weight *= 1.5;
        }
        let (_, corrupted) = value_loss_and_grad(&scaled, &value).expect("value eval");
        let mut loss = |net: &mut Net| {
            value_loss_and_grad(&items, net).expect("value eval").0
        };
        let err = fd_check(&mut loss, &mut value, &corrupted, 99);
        assert!(err > 1e-2, "corrupted gradient slipped through: {err}");
    }
}
