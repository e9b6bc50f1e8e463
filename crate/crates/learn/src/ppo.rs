//! Clipped-surrogate policy optimization over entropy-shaped rewards:
//! rollouts shape rewards with the behavior policy's successor entropy,
//! advantage estimates are re-augmented at update time with the entropy of
//! the policy being optimized, and that term carries gradient.

use ndarray::Array1;
use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use earl_core::envs::Env;
use earl_core::gae::{augment_advantage, compute_gae, GaeConfig, Transition};
use earl_core::mdp::{advantage, exact_policy_eval, state_visitation, TabularMDP, TabularPolicy};

use crate::error::{Error, Result};
use crate::model::{
    entropy_grad_wrt_logits, entropy_of_logits, log_softmax, sample_from_logits, Adam, Net,
    NetGrads, Optimizer, Sgd,
};
use crate::schedule::TemperatureSchedule;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelKind {
    Tabular,
    Mlp,
}

#[derive(Debug, Clone)]
pub struct PpoConfig {
    pub model: ModelKind,
    pub clip_ratio: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub policy_lr: f64,
    pub value_lr: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub rollout_steps: usize,
    pub iterations: usize,
    /// Collection-time shaping of rewards with rollout-policy entropy.
    pub shape_rewards: bool,
    /// Update-time advantage augmentation with current-policy entropy.
    pub augment_advantages: bool,
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.clip_ratio <= 0.0 {
            return Err(Error::Config("clip_ratio must be > 0".into()));
        }
        if self.epochs == 0 || self.rollout_steps == 0 || self.iterations == 0 {
            return Err(Error::Config(
                "epochs, rollout_steps, iterations must be >= 1".into(),
            ));
        }
        if self.minibatch == 0 {
            return Err(Error::Config("minibatch must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config("gamma in [0,1), lambda in [0,1]".into()));
        }
        Ok(())
    }
}

/// One update item. `weight` multiplies the item's contribution to every
/// loss; training uses 1/batch, exact-gradient audits use occupancy
/// probabilities.
#[derive(Debug, Clone)]
pub struct BatchItem {
    pub obs_id: usize,
    pub obs: Vec<f64>,
    pub next_obs_id: usize,
    pub next_obs: Vec<f64>,
    pub action: usize,
    pub log_prob_old: f64,
    pub advantage: f64,
    pub value_target: f64,
    pub terminal: bool,
    pub weight: f64,
}

#[derive(Debug, Clone)]
pub struct Rollout {
    pub transitions: Vec<Transition>,
    pub next_obs: Vec<usize>,
    /// Raw returns of episodes that finished inside this window.
    pub episode_returns: Vec<f64>,
    /// Behavior-policy entropy at each visited state, for metrics.
    pub entropies: Vec<f64>,
}

/// Runs the behavior policy for `steps` steps, recording per-transition
/// value estimates, log-probabilities, and the successor state's policy
/// entropy (zero on termination). `episode_acc` carries a partial episode's
/// raw return across window boundaries.
pub fn collect_rollout<E: Env>(
    env: &mut E,
    policy: &Net,
    value: &Net,
    steps: usize,
    rng: &mut ChaCha8Rng,
    episode_acc: &mut f64,
) -> Result<Rollout> {
    if steps == 0 {
        return Err(Error::Config("rollout steps must be >= 1".into()));
    }
    let dim = env.obs_dim();
    let mut buf = vec![0.0; dim];
    let mut next_buf = vec![0.0; dim];
    let mut out = Rollout {
        transitions: Vec::with_capacity(steps),
        next_obs: Vec::with_capacity(steps),
        episode_returns: Vec::new(),
        entropies: Vec::with_capacity(steps),
    };
    for _ in 0..steps {
        let s = env.obs_id();
        env.encode_obs(s, &mut buf);
        let logits = policy.forward(s, &buf);
        let lp = log_softmax(&logits);
        let a = sample_from_logits(&logits, rng);
        let v_s = value.forward(s, &buf)[0];
        out.entropies.push(entropy_of_logits(&logits));

        let step = env.step(a)?;
        *episode_acc += step.reward;
        let s2 = step.obs_id;
        let (entropy_next, value_next) = if step.done {
            (0.0, 0.0)
        } else {
            env.encode_obs(s2, &mut next_buf);
            (
                entropy_of_logits(&policy.forward(s2, &next_buf)),
                value.forward(s2, &next_buf)[0],
            )
        };
        out.transitions.push(Transition {
            state: s,
            action: a,
            reward: step.reward,
            entropy_next,
            value: v_s,
            value_next,
            log_prob: lp[a],
            done: step.done,
        });
        out.next_obs.push(s2);
        if step.done || step.truncated {
            out.episode_returns.push(*episode_acc);
            *episode_acc = 0.0;
            env.reset();
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct SurrogateEval {
    /// Negated clipped objective, weighted sum over items.
    pub policy_loss: f64,
    /// Weighted mean of log_prob_old - log_prob_new.
    pub kl: f64,
    /// Weighted mean policy entropy at the batch's states.
    pub entropy_mean: f64,
    pub grads: NetGrads,
}

/// Evaluates the clipped surrogate and its policy gradient in one pass.
///
/// The per-item objective is min(ratio * A, clip(ratio) * A) with
/// A = advantage + gamma alpha H(next) when augmentation is on; the entropy
/// term is a function of the current parameters and both branches carry its
/// gradient. At the clip boundary the unclipped branch's gradient is used.
pub fn surrogate_and_grad(
    items: &[BatchItem],
    policy: &Net,
    clip_ratio: f64,
    gamma: f64,
    alpha: f64,
    augment: bool,
) -> Result<SurrogateEval> {
    let mut grads = policy.zero_grads();
    let mut loss = 0.0;
    let mut kl = 0.0;
    let mut entropy_sum = 0.0;
    let mut total_w = 0.0;
    for (i, it) in items.iter().enumerate() {
        let logits = policy.forward(it.obs_id, &it.obs);
        let lp = log_softmax(&logits);
        let p = lp.mapv(f64::exp);
        let ratio = (lp[it.action] - it.log_prob_old).exp();

        let augmenting = augment && alpha > 0.0 && !it.terminal;
        let (next_logits, h_next) = if augmenting {
            let nl = policy.forward(it.next_obs_id, &it.next_obs);
            let h = entropy_of_logits(&nl);
            (Some(nl), h)
        } else {
            (None, 0.0)
        };
        let adv = if augmenting {
            augment_advantage(it.advantage, h_next, gamma, alpha)
        } else {
            it.advantage
        };

        let lo = 1.0 - clip_ratio;
        let hi = 1.0 + clip_ratio;
        let clipped_ratio = ratio.clamp(lo, hi);
        let unclipped = ratio * adv;
        let clipped = clipped_ratio * adv;
        // clipped < unclipped can only happen with the ratio outside the
        // clip window, where the clipped branch is constant in the ratio.
        let (obj, ratio_coef, adv_coef) = if unclipped <= clipped {
            (unclipped, ratio * adv, ratio)
        } else {
            (clipped, 0.0, clipped_ratio)
        };
        loss -= it.weight * obj;
        kl += it.weight * (it.log_prob_old - lp[it.action]);
        entropy_sum += it.weight * (-lp.iter().map(|&l| l.exp() * l).sum::<f64>());
        total_w += it.weight;

        // d obj / d logits(s): ratio_coef * (e_a - p).
        let mut dlogits = p.mapv(|pj| it.weight * ratio_coef * pj);
        dlogits[it.action] -= it.weight * ratio_coef;
        policy.accumulate_grad(it.obs_id, &it.obs, &dlogits, &mut grads);

        if let Some(nl) = next_logits {
            // d obj / d logits(s') = adv_coef * gamma alpha * dH/dlogits.
            let dh = entropy_grad_wrt_logits(&nl)
                .mapv(|g| -it.weight * adv_coef * gamma * alpha * g);
            policy.accumulate_grad(it.next_obs_id, &it.next_obs, &dh, &mut grads);
        }

        if !loss.is_finite() {
            return Err(Error::Training(format!(
                "non-finite surrogate at item {i}: ratio {ratio}, advantage {adv}, \
                 log_prob_old {}, action {}",
                it.log_prob_old, it.action
            )));
        }
    }
    let denom = if total_w > 0.0 { total_w } else { 1.0 };
    Ok(SurrogateEval {
        policy_loss: loss,
        kl: kl / denom,
        entropy_mean: entropy_sum / denom,
        grads,
    })
}

/// Weighted squared-error regression of the value head onto stored targets.
pub fn value_loss_and_grad(items: &[BatchItem], value: &Net) -> Result<(f64, NetGrads)> {
    let mut grads = value.zero_grads();
    let mut loss = 0.0;
    for it in items.iter() {
        let v = value.forward(it.obs_id, &it.obs)[0];
        let err = v - it.value_target;
        loss += it.weight * err * err;
        let dout = Array1::from(vec![it.weight * 2.0 * err]);
        value.accumulate_grad(it.obs_id, &it.obs, &dout, &mut grads);
    }
    if !loss.is_finite() {
        return Err(Error::Training(format!("non-finite value loss {loss}")));
    }
    Ok((loss, grads))
}

/// Converts a rollout into update items: advantages from the shaped
/// estimator, normalized per batch before augmentation; value targets are
/// the shaped lambda-returns (raw advantage plus baseline).
pub fn build_batch<E: Env>(
    env: &E,
    rollout: &Rollout,
    gamma: f64,
    lambda: f64,
    shaping_alpha: f64,
) -> Result<Vec<BatchItem>> {
    let gae = GaeConfig::new(gamma, lambda, shaping_alpha).map_err(earl_core::Error::from)?;
    let raw_adv = compute_gae(&rollout.transitions, &gae)?;
    let n = raw_adv.len();
    let mean = raw_adv.iter().sum::<f64>() / n as f64;
    let var = raw_adv.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n as f64;
    let std = var.sqrt().max(1e-8);

    let dim = env.obs_dim();
    let mut items = Vec::with_capacity(n);
    for (i, tr) in rollout.transitions.iter().enumerate() {
        let mut obs = vec![0.0; dim];
        env.encode_obs(tr.state, &mut obs);
        let mut next_obs = vec![0.0; dim];
        env.encode_obs(rollout.next_obs[i], &mut next_obs);
        items.push(BatchItem {
            obs_id: tr.state,
            obs,
            next_obs_id: rollout.next_obs[i],
            next_obs,
            action: tr.action,
            log_prob_old: tr.log_prob,
            advantage: (raw_adv[i] - mean) / std,
            value_target: raw_adv[i] + tr.value,
            terminal: tr.done,
            weight: 1.0 / n as f64,
        });
    }
    Ok(items)
}

#[derive(Debug, Clone, Copy)]
pub struct UpdateMetrics {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub kl: f64,
}

/// Runs `epochs` passes of shuffled minibatch updates over the items.
pub fn ppo_update(
    items: &mut Vec<BatchItem>,
    policy: &mut Net,
    value: &mut Net,
    policy_opt: &mut Optimizer,
    value_opt: &mut Optimizer,
    config: &PpoConfig,
    alpha: f64,
    rng: &mut ChaCha8Rng,
) -> Result<UpdateMetrics> {
    let mut policy_loss = 0.0;
    let mut value_loss = 0.0;
    let mut kl = 0.0;
    let mut updates = 0usize;
    for _ in 0..config.epochs {
        items.shuffle(rng);
        let mut start = 0;
        while start < items.len() {
            let end = (start + config.minibatch).min(items.len());
            let w = 1.0 / (end - start) as f64;
            for it in items[start..end].iter_mut() {
                it.weight = w;
            }
            let chunk = &items[start..end];
            let eval = surrogate_and_grad(
                chunk,
                policy,
                config.clip_ratio,
                config.gamma,
                alpha,
                config.augment_advantages,
            )?;
            policy_opt.step(policy, &eval.grads);
            let (vl, vgrads) = value_loss_and_grad(chunk, value)?;
            value_opt.step(value, &vgrads);
            policy_loss += eval.policy_loss;
            value_loss += vl;
            kl += eval.kl;
            updates += 1;
            start = end;
        }
    }
    let n = updates.max(1) as f64;
    Ok(UpdateMetrics {
        policy_loss: policy_loss / n,
        value_loss: value_loss / n,
        kl: kl / n,
    })
}

/// Pinned metric row; the harness writes these to CSV in field order.
#[derive(Debug, Clone, Copy)]
pub struct IterationMetrics {
    pub iteration: usize,
    pub raw_return_mean: f64,
    pub raw_return_std: f64,
    pub entropy_mean: f64,
    pub alpha: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub kl: f64,
}

pub struct PpoRun {
    pub metrics: Vec<IterationMetrics>,
    pub policy: Net,
    pub value: Net,
}

pub fn build_nets<E: Env>(env: &E, model: ModelKind, seed: u64) -> (Net, Net) {
    match model {
        ModelKind::Tabular => (
            Net::tabular(env.n_obs(), env.n_actions()),
            Net::tabular(env.n_obs(), 1),
        ),
        ModelKind::Mlp => (
            Net::mlp(env.obs_dim(), env.n_actions(), seed.wrapping_mul(2) + 1),
            Net::mlp(env.obs_dim(), 1, seed.wrapping_mul(2) + 2),
        ),
    }
}

/// Full training loop: one schedule step per iteration, rollout, shaped
/// advantage estimation, clipped updates. Episode returns in the metrics
/// are raw environment rewards; shaping never reaches them.
pub fn train<E: Env>(
    env: &mut E,
    config: &PpoConfig,
    schedule: &TemperatureSchedule,
    seed: u64,
) -> Result<PpoRun> {
    config.validate()?;
    let (mut policy, mut value) = build_nets(env, config.model, seed);
    let mut policy_opt = match config.model {
        ModelKind::Tabular => Optimizer::Sgd(Sgd { lr: config.policy_lr }),
        ModelKind::Mlp => Optimizer::Adam(Adam::new(config.policy_lr, policy.n_params())),
    };
    let mut value_opt = match config.model {
        ModelKind::Tabular => Optimizer::Sgd(Sgd { lr: config.value_lr }),
        ModelKind::Mlp => Optimizer::Adam(Adam::new(config.value_lr, value.n_params())),
    };
    let mut schedule = schedule.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9E37_79B9_7F4A_7C15);
    let mut episode_acc = 0.0;
    env.reset();

    let mut metrics = Vec::with_capacity(config.iterations);
    let mut last_return = (f64::NAN, f64::NAN);
    for iteration in 0..config.iterations {
        let alpha = schedule.step();
        let rollout = collect_rollout(
            env,
            &policy,
            &value,
            config.rollout_steps,
            &mut rng,
            &mut episode_acc,
        )?;
        let shaping_alpha = if config.shape_rewards { alpha } else { 0.0 };
        let mut items = build_batch(env, &rollout, config.gamma, config.lambda, shaping_alpha)?;
        let update = ppo_update(
            &mut items,
            &mut policy,
            &mut value,
            &mut policy_opt,
            &mut value_opt,
            config,
            alpha,
            &mut rng,
        )?;

        if !rollout.episode_returns.is_empty() {
            let n = rollout.episode_returns.len() as f64;
            let mean = rollout.episode_returns.iter().sum::<f64>() / n;
            let var = rollout
                .episode_returns
                .iter()
                .map(|r| (r - mean) * (r - mean))
                .sum::<f64>()
                / n;
            last_return = (mean, var.sqrt());
        }
        let entropy_mean =
            rollout.entropies.iter().sum::<f64>() / rollout.entropies.len() as f64;
        metrics.push(IterationMetrics {
            iteration,
            raw_return_mean: last_return.0,
            raw_return_std: last_return.1,
            entropy_mean,
            alpha,
            policy_loss: update.policy_loss,
            value_loss: update.value_loss,
            kl: update.kl,
        });
    }
    Ok(PpoRun {
        metrics,
        policy,
        value,
    })
}

/// Update items that make the weighted surrogate equal the exact one:
/// each (s, a, s') with occupancy weight rho(s) pi(a|s) P(s'|s,a), exact
/// advantages, and the behavior policy's log-probabilities. Feeding these
/// through `surrogate_and_grad` with an inactive clip yields the analytic
/// surrogate gradient, the bridge audits use to pin sampled training to
/// closed-form quantities.
pub fn exact_surrogate_batch(
    mdp: &TabularMDP,
    policy_old: &TabularPolicy,
    alpha: f64,
) -> Result<Vec<BatchItem>> {
    let q = exact_policy_eval(mdp, policy_old, alpha)?;
    let adv = advantage(&q, policy_old);
    let rho = state_visitation(mdp, policy_old)?;
    let n = mdp.n_states();
    let mut items = Vec::new();
    for s in 0..n {
        let mut obs = vec![0.0; n];
        obs[s] = 1.0;
        for a in 0..mdp.n_actions() {
            let pa = policy_old.probs()[[s, a]];
            if pa == 0.0 {
                continue;
            }
            for s2 in 0..n {
                let pt = mdp.transition()[[s, a, s2]];
                if pt == 0.0 {
                    continue;
                }
                let mut next_obs = vec![0.0; n];
                next_obs[s2] = 1.0;
                items.push(BatchItem {
                    obs_id: s,
                    obs: obs.clone(),
                    next_obs_id: s2,
                    next_obs,
                    action: a,
                    log_prob_old: pa.ln(),
                    advantage: adv[[s, a]],
                    value_target: 0.0,
                    terminal: false,
                    weight: rho[s] * pa * pt,
                });
            }
        }
    }
    Ok(items)
}

#[cfg(test)]
mod tests {
    use super::*;
    use earl_core::envs::{random_mdp, random_policy, TabularEnv};
    use earl_core::mdp::policy_entropy;
    use ndarray::{arr1, arr2, Array2, Array3};
    use rand::Rng;

    fn one_hot(dim: usize, idx: usize) -> Vec<f64> {
        let mut v = vec![0.0; dim];
        v[idx] = 1.0;
        v
    }

    #[test]
    fn clipped_loss_matches_hand_computation() {
        // Two observations, two actions; current probabilities 0.5/0.5 at
        // observation 0 and 0.75/0.25 at observation 1.
        let mut policy = Net::tabular(2, 2);
        policy.set_params(&[0.0, 0.0, 3.0f64.ln(), 0.0]).unwrap();
        let item = |obs_id: usize, action: usize, p_old: f64, advantage: f64| BatchItem {
            obs_id,
            obs: one_hot(2, obs_id),
            next_obs_id: 0,
            next_obs: one_hot(2, 0),
            action,
            log_prob_old: p_old.ln(),
            advantage,
            value_target: 0.0,
            terminal: false,
            weight: 1.0 / 3.0,
        };
        let items = vec![
            // ratio 0.5/0.4 = 1.25 clips to 1.2: objective 1.2 * 2 = 2.4
            item(0, 0, 0.4, 2.0),
            // ratio 0.25/0.5 = 0.5 clips to 0.8: objective -0.8 beats -0.5
            item(1, 1, 0.5, -1.0),
            // ratio 0.75/0.8 = 0.9375 inside the window: objective 0.9375
            item(1, 0, 0.8, 1.0),
        ];
        let eval = surrogate_and_grad(&items, &policy, 0.2, 0.9, 0.0, false).unwrap();
        let expected = -(2.4 - 0.8 + 0.9375) / 3.0;
        assert!(
            (eval.policy_loss - expected).abs() < 1e-9,
            "{} vs {expected}",
            eval.policy_loss
        );
        let expected_kl = ((0.4f64 / 0.5).ln() + (0.5f64 / 0.25).ln() + (0.8f64 / 0.75).ln()) / 3.0;
        assert!((eval.kl - expected_kl).abs() < 1e-9);
    }

    /// Closed-form gradient of the augmented surrogate at theta_old with
    /// respect to tabular logits, assembled from occupancy algebra rather
    /// than per-item backprop. The entropy bonus enters twice: through the
    /// reweighted payload and through each successor state's entropy, whose
    /// discounted visit mass is (rho - rho0) / gamma.
    fn analytic_surrogate_grad(
        mdp: &TabularMDP,
        pol: &TabularPolicy,
        alpha: f64,
    ) -> Array2<f64> {
        let gamma = mdp.discount();
        let q = exact_policy_eval(mdp, pol, alpha).unwrap();
        let adv = advantage(&q, pol);
        let rho = state_visitation(mdp, pol).unwrap();
        let h = policy_entropy(pol);
        let ph = mdp.expected_next(&h);
        let probs = pol.probs();
        let (n, m) = (mdp.n_states(), mdp.n_actions());
        let mut g = Array2::zeros((n, m));
        for s in 0..n {
            let payload: Vec<f64> = (0..m)
                .map(|a| adv[[s, a]] + gamma * alpha * ph[[s, a]])
                .collect();
            let mean: f64 = (0..m).map(|a| probs[[s, a]] * payload[a]).sum();
            let nu = (rho[s] - mdp.initial_dist()[s]) / gamma;
            for j in 0..m {
                let pj = probs[[s, j]];
                g[[s, j]] += rho[s] * pj * (payload[j] - mean);
                g[[s, j]] += gamma * alpha * nu * (-pj * (pj.ln() + h[s]));
            }
        }
        g
    }

    #[test]
    fn sampled_surrogate_gradient_matches_closed_form_at_theta_old() {
        for (seed, alpha) in [(3u64, 0.0), (17u64, 0.3), (40u64, 1.0)] {
            let mdp = random_mdp(seed, 5, 3, 0.9).unwrap();
            let pol = random_policy(seed + 100, 5, 3).unwrap();
            let items = exact_surrogate_batch(&mdp, &pol, alpha).unwrap();

            let wsum: f64 = items.iter().map(|it| it.weight).sum();
            assert!(
                (wsum - 1.0 / (1.0 - mdp.discount())).abs() < 1e-8,
                "weights carry occupancy mass, got {wsum}"
            );

            let mut policy = Net::tabular(5, 3);
            let logits: Vec<f64> = pol.probs().iter().map(|p| p.ln()).collect();
            policy.set_params(&logits).unwrap();
            let eval =
                surrogate_and_grad(&items, &policy, 1e18, mdp.discount(), alpha, true).unwrap();
            let oracle = analytic_surrogate_grad(&mdp, &pol, alpha);

            let got = eval.grads.flat();
            let mut worst = 0.0f64;
            for (g_loss, g_sur) in got.iter().zip(oracle.iter()) {
                // loss gradients are the negated surrogate gradients
                worst = worst.max((g_loss + g_sur).abs());
            }
            assert!(worst < 1e-9, "seed {seed} alpha {alpha}: max diff {worst:.3e}");
        }
    }

    #[test]
    fn inactive_clip_reduces_to_plain_importance_surrogate() {
        let mdp = random_mdp(7, 4, 3, 0.85).unwrap();
        let pol_old = random_policy(8, 4, 3).unwrap();
        let alpha = 0.4;
        let items = exact_surrogate_batch(&mdp, &pol_old, alpha).unwrap();

        // Move the parameters away from theta_old so ratios spread out.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let logits: Vec<f64> = pol_old
            .probs()
            .iter()
            .map(|p| p.ln() + rng.gen_range(-0.3..0.3))
            .collect();
        let mut policy = Net::tabular(4, 3);
        policy.set_params(&logits).unwrap();

        let gamma = mdp.discount();
        let mut plain = 0.0;
        for it in &items {
            let lp = log_softmax(&policy.forward(it.obs_id, &it.obs));
            let ratio = (lp[it.action] - it.log_prob_old).exp();
            let h_next = entropy_of_logits(&policy.forward(it.next_obs_id, &it.next_obs));
            plain += it.weight * ratio * (it.advantage + gamma * alpha * h_next);
        }

        let free = surrogate_and_grad(&items, &policy, 1e18, gamma, alpha, true).unwrap();
        assert!((free.policy_loss + plain).abs() < 1e-12);

        // An active clip can only lower the objective, never raise it.
        let clipped = surrogate_and_grad(&items, &policy, 0.2, gamma, alpha, true).unwrap();
        assert!(clipped.policy_loss >= free.policy_loss - 1e-12);
    }

    #[test]
    fn gradient_step_decreases_surrogate_loss() {
        let mdp = random_mdp(21, 4, 3, 0.9).unwrap();
        let pol_old = random_policy(22, 4, 3).unwrap();
        let alpha = 0.3;
        let items = exact_surrogate_batch(&mdp, &pol_old, alpha).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let logits: Vec<f64> = pol_old
            .probs()
            .iter()
            .map(|p| p.ln() + rng.gen_range(-0.2..0.2))
            .collect();
        let mut policy = Net::tabular(4, 3);
        policy.set_params(&logits).unwrap();

        let eval = surrogate_and_grad(&items, &policy, 0.2, mdp.discount(), alpha, true).unwrap();
        let g = eval.grads.flat();
        let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(norm > 1e-8, "degenerate batch, gradient norm {norm:.3e}");

        let lr = 1e-3;
        let stepped: Vec<f64> = policy
            .params()
            .iter()
            .zip(g.iter())
            .map(|(p, gi)| p - lr * gi)
            .collect();
        policy.set_params(&stepped).unwrap();
        let after = surrogate_and_grad(&items, &policy, 0.2, mdp.discount(), alpha, true).unwrap();
        assert!(
            after.policy_loss < eval.policy_loss,
            "{} !< {}",
            after.policy_loss,
            eval.policy_loss
        );
    }

    #[test]
    fn rollout_records_match_recomputation() {
        let mdp = random_mdp(11, 4, 3, 0.9).unwrap();
        let mut env = TabularEnv::new(mdp, 1000, 31).unwrap();
        let mut policy = Net::tabular(4, 3);
        let mut value = Net::tabular(4, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let plogits: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let vvals: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        policy.set_params(&plogits).unwrap();
        value.set_params(&vvals).unwrap();

        let mut acc = 0.0;
        let rollout = collect_rollout(&mut env, &policy, &value, 100, &mut rng, &mut acc).unwrap();
        assert_eq!(rollout.transitions.len(), 100);
        for (i, tr) in rollout.transitions.iter().enumerate() {
            let obs = one_hot(4, tr.state);
            let lp = log_softmax(&policy.forward(tr.state, &obs));
            assert!((tr.log_prob - lp[tr.action]).abs() < 1e-15);
            assert!((tr.value - value.forward(tr.state, &obs)[0]).abs() < 1e-15);
            assert!(!tr.done, "the tabular environment never terminates");
            let next = one_hot(4, rollout.next_obs[i]);
            let h = entropy_of_logits(&policy.forward(rollout.next_obs[i], &next));
            assert!((tr.entropy_next - h).abs() < 1e-15);
            assert!(
                (tr.value_next - value.forward(rollout.next_obs[i], &next)[0]).abs() < 1e-15
            );
            // max_steps exceeds the window, so the state chain never resets
            if i + 1 < rollout.transitions.len() {
                assert_eq!(rollout.transitions[i + 1].state, rollout.next_obs[i]);
            }
        }
    }

    #[test]
    fn episode_returns_partition_the_reward_stream() {
        let mdp = random_mdp(41, 3, 2, 0.9).unwrap();
        let mut env = TabularEnv::new(mdp, 10, 42).unwrap();
        let policy = Net::tabular(3, 2);
        let value = Net::tabular(3, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let mut acc = 0.0;
        let rollout = collect_rollout(&mut env, &policy, &value, 35, &mut rng, &mut acc).unwrap();
        assert_eq!(rollout.episode_returns.len(), 3);
        let total: f64 = rollout.transitions.iter().map(|t| t.reward).sum();
        let partitioned: f64 = rollout.episode_returns.iter().sum::<f64>() + acc;
        assert!((total - partitioned).abs() < 1e-12);
        let tail: f64 = rollout.transitions[30..].iter().map(|t| t.reward).sum();
        assert!((acc - tail).abs() < 1e-12);
    }

    #[test]
    fn batch_targets_and_normalization() {
        let mdp = random_mdp(51, 4, 3, 0.9).unwrap();
        let mut env = TabularEnv::new(mdp, 1000, 52).unwrap();
        let mut policy = Net::tabular(4, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let plogits: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
        policy.set_params(&plogits).unwrap();
        let value = Net::tabular(4, 1);
        let mut acc = 0.0;
        let rollout = collect_rollout(&mut env, &policy, &value, 64, &mut rng, &mut acc).unwrap();

        let items = build_batch(&env, &rollout, 0.9, 0.95, 0.0).unwrap();
        let raw = compute_gae(&rollout.transitions, &GaeConfig::new(0.9, 0.95, 0.0).unwrap())
            .unwrap();
        let n = items.len() as f64;
        for (i, it) in items.iter().enumerate() {
            assert!((it.value_target - (raw[i] + rollout.transitions[i].value)).abs() < 1e-12);
            assert!((it.weight - 1.0 / n).abs() < 1e-15);
            assert_eq!(it.obs_id, rollout.transitions[i].state);
            assert_eq!(it.next_obs_id, rollout.next_obs[i]);
            assert!((it.obs[it.obs_id] - 1.0).abs() < 1e-15);
        }
        let mean: f64 = items.iter().map(|it| it.advantage).sum::<f64>() / n;
        let var: f64 = items.iter().map(|it| (it.advantage - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 1e-10);
        assert!((var - 1.0).abs() < 1e-8);

        // A positive shaping temperature must move the value targets, since
        // a softmax policy has strictly positive entropy everywhere.
        let shaped = build_batch(&env, &rollout, 0.9, 0.95, 0.5).unwrap();
        let moved = items
            .iter()
            .zip(shaped.iter())
            .any(|(a, b)| (a.value_target - b.value_target).abs() > 1e-9);
        assert!(moved);
    }

    fn stay_or_hop_mdp() -> TabularMDP {
        // Action 0 stays and pays 1; action 1 hops to the other state for 0.
        let transition = Array3::from_shape_fn((2, 2, 2), |(s, a, s2)| {
            let target = if a == 0 { s } else { 1 - s };
            if s2 == target {
                1.0
            } else {
                0.0
            }
        });
        let reward = arr2(&[[1.0, 0.0], [1.0, 0.0]]);
        TabularMDP::new(transition, reward, 0.9, arr1(&[0.5, 0.5])).unwrap()
    }

    #[test]
    fn training_is_deterministic() {
        let config = PpoConfig {
            model: ModelKind::Tabular,
            clip_ratio: 0.2,
            epochs: 2,
            minibatch: 32,
            policy_lr: 0.2,
            value_lr: 0.2,
            gamma: 0.9,
            lambda: 0.95,
            rollout_steps: 64,
            iterations: 3,
            shape_rewards: true,
            augment_advantages: true,
        };
        let schedule = TemperatureSchedule::exponential(0.3, 0.95).unwrap();
        let run = |env_seed: u64| {
            let mdp = random_mdp(61, 3, 2, 0.9).unwrap();
            let mut env = TabularEnv::new(mdp, 20, env_seed).unwrap();
            train(&mut env, &config, &schedule, 123).unwrap()
        };
        let a = run(7);
        let b = run(7);
        assert_eq!(a.metrics.len(), b.metrics.len());
        for (ma, mb) in a.metrics.iter().zip(b.metrics.iter()) {
            assert_eq!(ma.raw_return_mean.to_bits(), mb.raw_return_mean.to_bits());
            assert_eq!(ma.policy_loss.to_bits(), mb.policy_loss.to_bits());
            assert_eq!(ma.value_loss.to_bits(), mb.value_loss.to_bits());
            assert_eq!(ma.kl.to_bits(), mb.kl.to_bits());
            assert_eq!(ma.alpha.to_bits(), mb.alpha.to_bits());
        }
        for (pa, pb) in a.policy.params().iter().zip(b.policy.params().iter()) {
            assert_eq!(pa.to_bits(), pb.to_bits());
        }
    }

    #[test]
    fn tabular_training_improves_a_two_state_chain() {
        let mut env = TabularEnv::new(stay_or_hop_mdp(), 30, 71).unwrap();
        let config = PpoConfig {
            model: ModelKind::Tabular,
            clip_ratio: 0.2,
            epochs: 4,
            minibatch: 64,
            policy_lr: 0.2,
            value_lr: 0.3,
            gamma: 0.9,
            lambda: 0.95,
            rollout_steps: 256,
            iterations: 12,
            shape_rewards: false,
            augment_advantages: false,
        };
        let schedule = TemperatureSchedule::constant(0.0).unwrap();
        let run = train(&mut env, &config, &schedule, 5).unwrap();
        let first = run.metrics.first().unwrap().raw_return_mean;
        let last = run.metrics.last().unwrap().raw_return_mean;
        // Uniform play earns about 15 per 30-step episode; staying earns 30.
        assert!(first < 20.0, "starting policy already optimal? {first}");
        assert!(last > 25.0, "no learning: first {first}, last {last}");
    }

    #[test]
    fn augmented_training_reports_the_schedule_and_stays_finite() {
        let mdp = random_mdp(81, 3, 2, 0.9).unwrap();
        let mut env = TabularEnv::new(mdp, 20, 82).unwrap();
        let config = PpoConfig {
            model: ModelKind::Tabular,
            clip_ratio: 0.2,
            epochs: 2,
            minibatch: 32,
            policy_lr: 0.1,
            value_lr: 0.2,
            gamma: 0.9,
            lambda: 0.95,
            rollout_steps: 64,
            iterations: 4,
            shape_rewards: true,
            augment_advantages: true,
        };
        let schedule = TemperatureSchedule::exponential(0.5, 0.9).unwrap();
        let run = train(&mut env, &config, &schedule, 9).unwrap();
        for (t, m) in run.metrics.iter().enumerate() {
            assert!((m.alpha - 0.5 * 0.9f64.powi(t as i32)).abs() < 1e-12);
            assert!(m.policy_loss.is_finite());
            assert!(m.value_loss.is_finite());
            assert!(m.raw_return_mean.is_finite());
            assert!(m.entropy_mean > 0.0);
        }
    }

    #[test]
    fn config_validation_rejects_bad_settings() {
        let good = PpoConfig {
            model: ModelKind::Tabular,
            clip_ratio: 0.2,
            epochs: 1,
            minibatch: 8,
            policy_lr: 0.1,
            value_lr: 0.1,
            gamma: 0.9,
            lambda: 0.95,
            rollout_steps: 16,
            iterations: 1,
            shape_rewards: false,
            augment_advantages: false,
        };
        assert!(good.validate().is_ok());
        for bad in [
            PpoConfig { clip_ratio: 0.0, ..good.clone() },
            PpoConfig { epochs: 0, ..good.clone() },
            PpoConfig { minibatch: 0, ..good.clone() },
            PpoConfig { gamma: 1.0, ..good.clone() },
            PpoConfig { lambda: 1.1, ..good.clone() },
        ] {
            assert!(bad.validate().is_err());
        }
    }
}
