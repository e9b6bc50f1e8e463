//! Discrete-action soft actor-critic with the entropy bonus in the Q target
//! and a plain bootstrap value target: y_Q carries gamma (V(s') + alpha H(s')),
//! y_V is Q at a freshly sampled action with no entropy term.

use ndarray::Array1;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use earl_core::envs::Env;

use crate::error::{Error, Result};
use crate::model::{
    entropy_of_logits, log_softmax, sample_from_logits, Adam, Net, NetGrads, Optimizer,
};
use crate::ppo::ModelKind;
use crate::schedule::TemperatureSchedule;

/// Number of sampled actions behind each entropy estimate.
pub const ENTROPY_SAMPLES: usize = 5;

#[derive(Debug, Clone, Copy)]
pub struct Stored {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
    pub done: bool,
}

/// Fixed-capacity ring with uniform sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    items: Vec<Stored>,
    capacity: usize,
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("buffer capacity must be >= 1".into()));
        }
        Ok(Self {
            items: Vec::with_capacity(capacity),
            capacity,
            cursor: 0,
        })
    }

    pub fn push(&mut self, t: Stored) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.cursor] = t;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn sample(&self, n: usize, rng: &mut ChaCha8Rng) -> Vec<Stored> {
        (0..n)
            .map(|_| self.items[rng.gen_range(0..self.items.len())])
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct SacNets {
    pub q: Net,
    pub value: Net,
    pub target_value: Net,
    pub policy: Net,
    pub tau: f64,
}

impl SacNets {
    pub fn new<E: Env>(env: &E, model: ModelKind, tau: f64, seed: u64) -> Result<Self> {
        if !(0.0 < tau && tau <= 1.0) {
            return Err(Error::Config(format!("tau must be in (0, 1], got {tau}")));
        }
        let (q, value, policy) = match model {
            ModelKind::Tabular => (
                Net::tabular(env.n_obs(), env.n_actions()),
                Net::tabular(env.n_obs(), 1),
                Net::tabular(env.n_obs(), env.n_actions()),
            ),
            ModelKind::Mlp => (
                Net::mlp(env.obs_dim(), env.n_actions(), seed.wrapping_mul(3) + 1),
                Net::mlp(env.obs_dim(), 1, seed.wrapping_mul(3) + 2),
                Net::mlp(env.obs_dim(), env.n_actions(), seed.wrapping_mul(3) + 3),
            ),
        };
        let target_value = value.clone();
        Ok(Self {
            q,
            value,
            target_value,
            policy,
            tau,
        })
    }

    /// target <- (1 - tau) target + tau value.
    pub fn polyak(&mut self) {
        let v = self.value.params();
        let mut t = self.target_value.params();
        for (ti, vi) in t.iter_mut().zip(v.iter()) {
            *ti = (1.0 - self.tau) * *ti + self.tau * *vi;
        }
        self.target_value
            .set_params(&t)
            .expect("same net, same length");
    }
}

/// y_Q = r + gamma (1 - done) (V_target(s') + alpha H(s')).
pub fn q_target(
    r: f64,
    v_target_next: f64,
    entropy_next: f64,
    gamma: f64,
    alpha: f64,
    done: bool,
) -> f64 {
    if done {
        r
    } else {
        r + gamma * (v_target_next + alpha * entropy_next)
    }
}

/// y_V = Q(s, a') at a freshly sampled action; no entropy term here.
pub fn v_target(q_row: &Array1<f64>, sampled_action: usize) -> f64 {
    q_row[sampled_action]
}

/// The soft-operator form of the value target, kept for contrast audits:
/// it differs from `v_target` by exactly -alpha log pi(a'|s).
pub fn soft_v_target(q_value: f64, log_prob: f64, alpha: f64) -> f64 {
    q_value - alpha * log_prob
}

/// Mean of negative log-probabilities; unbiased for H when the samples
/// come from the distribution itself. Callers guarantee at least one sample.
pub fn entropy_estimate(log_probs: &[f64]) -> f64 {
    assert!(!log_probs.is_empty(), "entropy estimate needs samples");
    log_probs.iter().map(|lp| -lp).sum::<f64>() / log_probs.len() as f64
}

/// KL(pi_theta(.|s) || softmax(Q(s,.)/alpha)) averaged over states, with its
/// gradient through theta only.
pub fn projection_loss_and_grad(
    states: &[(usize, Vec<f64>)],
    q_net: &Net,
    policy: &Net,
    alpha: f64,
) -> Result<(f64, NetGrads)> {
    if alpha <= 0.0 {
        return Err(Error::Config(format!(
            "projection needs alpha > 0, got {alpha}"
        )));
    }
    if states.is_empty() {
        return Err(Error::Config("projection needs at least one state".into()));
    }
    let mut grads = policy.zero_grads();
    let mut loss = 0.0;
    let w = 1.0 / states.len() as f64;
    for (obs_id, obs) in states {
        let lp = log_softmax(&policy.forward(*obs_id, obs));
        let target_lp = log_softmax(&(q_net.forward(*obs_id, obs) / alpha));
        let mut kl = 0.0;
        for (l, t) in lp.iter().zip(target_lp.iter()) {
            kl += l.exp() * (l - t);
        }
        loss += w * kl;
        // dKL/dz_j = p_j ((log p_j - log u_j) - KL).
        let dlogits = Array1::from_shape_fn(lp.len(), |j| {
            w * lp[j].exp() * ((lp[j] - target_lp[j]) - kl)
        });
        policy.accumulate_grad(*obs_id, obs, &dlogits, &mut grads);
    }
    if !loss.is_finite() {
        return Err(Error::Training(format!("non-finite projection loss {loss}")));
    }
    Ok((loss, grads))
}

/// One actor step toward the softmax of the current critic.
pub fn policy_update(
    states: &[(usize, Vec<f64>)],
    q_net: &Net,
    policy: &mut Net,
    policy_opt: &mut Optimizer,
    alpha: f64,
) -> Result<f64> {
    let (loss, grads) = projection_loss_and_grad(states, q_net, policy, alpha)?;
    policy_opt.step(policy, &grads);
    Ok(loss)
}

#[derive(Debug, Clone)]
pub struct SacConfig {
    pub model: ModelKind,
    pub capacity: usize,
    pub batch: usize,
    pub tau: f64,
    pub q_lr: f64,
    pub value_lr: f64,
    pub policy_lr: f64,
    pub gamma: f64,
    pub total_steps: usize,
    /// Env steps per metric row; the temperature schedule is divided so
    /// one row spans one schedule step's worth of decay.
    pub metric_window: usize,
    /// Uniform-random action steps before the policy takes over.
    pub warmup: usize,
}

impl SacConfig {
    pub fn defaults(model: ModelKind) -> Self {
        Self {
            model,
            capacity: 100_000,
            batch: 64,
            tau: 0.005,
            q_lr: 3e-4,
            value_lr: 3e-4,
            policy_lr: 3e-4,
            gamma: 0.99,
            total_steps: 30_000,
            metric_window: 1_000,
            warmup: 500,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 || self.total_steps == 0 || self.metric_window == 0 {
            return Err(Error::Config(
                "batch, total_steps, metric_window must be >= 1".into(),
            ));
        }
        if self.capacity < self.batch {
            return Err(Error::Config("capacity must be >= batch".into()));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Config("gamma must be in [0, 1)".into()));
        }
        if !(0.0 < self.tau && self.tau <= 1.0) {
            return Err(Error::Config("tau must be in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Metric row per window; the first eight fields match the on-policy
/// schema, then buffer fill and the value-vs-target parameter distance.
#[derive(Debug, Clone, Copy)]
pub struct SacMetrics {
    pub iteration: usize,
    pub raw_return_mean: f64,
    pub raw_return_std: f64,
    pub entropy_mean: f64,
    pub alpha: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub kl: f64,
    pub buffer_size: usize,
    pub target_divergence: f64,
}

pub struct SacRun {
    pub metrics: Vec<SacMetrics>,
    pub nets: SacNets,
}

/// Per-step loop: act, store, then one round of critic, actor, value, and
/// polyak updates off a uniform minibatch. The actor projects against the
/// critic as updated this step. Temperatures must stay positive; schedule
/// decay is spread across each metric window.
pub fn sac_train<E: Env>(
    env: &mut E,
    config: &SacConfig,
    schedule: &TemperatureSchedule,
    seed: u64,
) -> Result<SacRun> {
    config.validate()?;
    if schedule.peek() <= 0.0 {
        return Err(Error::Config(
            "soft actor-critic needs a positive temperature".into(),
        ));
    }
    let mut nets = SacNets::new(env, config.model, config.tau, seed)?;
    let mut q_opt = Adam::new(config.q_lr, nets.q.n_params());
    let mut value_opt = Adam::new(config.value_lr, nets.value.n_params());
    let mut policy_opt = Optimizer::Adam(Adam::new(config.policy_lr, nets.policy.n_params()));
    let mut buffer = ReplayBuffer::new(config.capacity)?;
    let mut schedule = schedule.divided(config.metric_window as u64)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x51_7C_C1_B7_27_22_0A_95);

    let dim = env.obs_dim();
    let mut obs = vec![0.0; dim];
    let mut next_obs = vec![0.0; dim];
    env.reset();

    let mut metrics = Vec::new();
    let mut episode_acc = 0.0;
    let mut window_returns: Vec<f64> = Vec::new();
    let mut window_entropy = 0.0;
    let mut window_losses = (0.0, 0.0, 0usize); // (policy, value, updates)
    let mut last_return = (f64::NAN, f64::NAN);
    let gamma = config.gamma;

    for t in 0..config.total_steps {
        let alpha = schedule.step();
        let s = env.obs_id();
        env.encode_obs(s, &mut obs);
        let logits = nets.policy.forward(s, &obs);
        window_entropy += entropy_of_logits(&logits);
        let a = if t < config.warmup {
            rng.gen_range(0..env.n_actions())
        } else {
            sample_from_logits(&logits, &mut rng)
        };
        let step = env.step(a)?;
        episode_acc += step.reward;
        buffer.push(Stored {
            state: s,
            action: a,
            reward: step.reward,
            next_state: step.obs_id,
            done: step.done,
        });
        if step.done || step.truncated {
            window_returns.push(episode_acc);
            episode_acc = 0.0;
            env.reset();
        }

        if buffer.len() >= config.batch {
            let batch = buffer.sample(config.batch, &mut rng);
            let bw = 1.0 / batch.len() as f64;

            // Critic: (Q(s,a) - y_Q)^2 with the entropy bonus inside y_Q,
            // entropy estimated from sampled actions at s'.
            let mut q_grads = nets.q.zero_grads();
            for it in &batch {
                env.encode_obs(it.state, &mut obs);
                let y = if it.done {
                    q_target(it.reward, 0.0, 0.0, gamma, alpha, true)
                } else {
                    env.encode_obs(it.next_state, &mut next_obs);
                    let v_next = nets.target_value.forward(it.next_state, &next_obs)[0];
                    let lp_next = log_softmax(&nets.policy.forward(it.next_state, &next_obs));
                    let sampled: Vec<f64> = (0..ENTROPY_SAMPLES)
                        .map(|_| {
                            let pick = sample_from_logits(&lp_next, &mut rng);
                            lp_next[pick]
                        })
                        .collect();
                    let h = entropy_estimate(&sampled);
                    q_target(it.reward, v_next, h, gamma, alpha, false)
                };
                let q_row = nets.q.forward(it.state, &obs);
                let err = q_row[it.action] - y;
                let mut dout = Array1::zeros(q_row.len());
                dout[it.action] = bw * 2.0 * err;
                nets.q.accumulate_grad(it.state, &obs, &dout, &mut q_grads);
            }
            q_opt.step(&mut nets.q, &q_grads);

            // Actor reads the critic as just updated.
            let states: Vec<(usize, Vec<f64>)> = batch
                .iter()
                .map(|it| {
                    env.encode_obs(it.state, &mut obs);
                    (it.state, obs.clone())
                })
                .collect();
            let proj_loss =
                policy_update(&states, &nets.q, &mut nets.policy, &mut policy_opt, alpha)?;

            // Value: (V(s) - Q(s, a'))^2 at a fresh action from the policy.
            let mut v_grads = nets.value.zero_grads();
            let mut v_loss = 0.0;
            for (obs_id, x) in &states {
                let a2 = sample_from_logits(&nets.policy.forward(*obs_id, x), &mut rng);
                let y = v_target(&nets.q.forward(*obs_id, x), a2);
                let v = nets.value.forward(*obs_id, x)[0];
                let err = v - y;
                v_loss += bw * err * err;
                let dout = Array1::from(vec![bw * 2.0 * err]);
                nets.value.accumulate_grad(*obs_id, x, &dout, &mut v_grads);
            }
            value_opt.step(&mut nets.value, &v_grads);
            nets.polyak();

            if !proj_loss.is_finite() || !v_loss.is_finite() {
                return Err(Error::Training(format!(
                    "non-finite losses at step {t}: projection {proj_loss}, value {v_loss}"
                )));
            }
            window_losses.0 += proj_loss;
            window_losses.1 += v_loss;
            window_losses.2 += 1;
        }

        if (t + 1) % config.metric_window == 0 {
            if !window_returns.is_empty() {
                let n = window_returns.len() as f64;
                let mean = window_returns.iter().sum::<f64>() / n;
                let var = window_returns
                    .iter()
                    .map(|r| (r - mean) * (r - mean))
                    .sum::<f64>()
                    / n;
                last_return = (mean, var.sqrt());
            }
            let updates = window_losses.2.max(1) as f64;
            let divergence = nets
                .value
                .params()
                .iter()
                .zip(nets.target_value.params().iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            metrics.push(SacMetrics {
                iteration: metrics.len(),
                raw_return_mean: last_return.0,
                raw_return_std: last_return.1,
                entropy_mean: window_entropy / config.metric_window as f64,
                alpha,
                policy_loss: window_losses.0 / updates,
                value_loss: window_losses.1 / updates,
                kl: window_losses.0 / updates,
                buffer_size: buffer.len(),
                target_divergence: divergence,
            });
            window_returns.clear();
            window_entropy = 0.0;
            window_losses = (0.0, 0.0, 0);
        }
    }
    Ok(SacRun { metrics, nets })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::softmax;
    use earl_core::envs::{random_mdp, random_policy, DiagonalEnv};
    use earl_core::mdp::policy_entropy;
    use earl_core::operators::{bootstrap_backup, soft_improvement_step};
    use ndarray::arr1;

    #[test]
    fn q_target_hand_values() {
        // 1 + 0.9 (2 + 0.5 ln 4)
        let y = q_target(1.0, 2.0, 4f64.ln(), 0.9, 0.5, false);
        assert!((y - 3.4238324625).abs() < 1e-9, "{y}");
        assert_eq!(q_target(1.0, 2.0, 4f64.ln(), 0.9, 0.5, true), 1.0);
        assert!((q_target(1.0, 2.0, 9.9, 0.9, 0.0, false) - 2.8).abs() < 1e-12);
    }

    #[test]
    fn sampled_value_target_is_unbiased_for_the_q_expectation() {
        let q_row = arr1(&[2.0, -1.0, 0.5]);
        let p: [f64; 3] = [0.5, 0.3, 0.2];
        let logits = arr1(&[p[0].ln(), p[1].ln(), p[2].ln()]);
        assert_eq!(v_target(&q_row, 2), 0.5);

        let mut rng = ChaCha8Rng::seed_from_u64(301);
        let n = 100_000;
        let mut acc = 0.0;
        let mut acc_soft = 0.0;
        let alpha = 0.7;
        let lp = log_softmax(&logits);
        for _ in 0..n {
            let a = sample_from_logits(&logits, &mut rng);
            acc += v_target(&q_row, a);
            acc_soft += soft_v_target(q_row[a], lp[a], alpha);
        }
        let mean = acc / n as f64;
        let expected: f64 = p.iter().zip(q_row.iter()).map(|(pi, qi)| pi * qi).sum();
        // exact std 1.31, so three standard errors is about 0.0124
        assert!((mean - expected).abs() < 0.0124, "{mean} vs {expected}");

        // The soft form lands alpha H above the plain one.
        let h: f64 = -p.iter().map(|pi| pi * pi.ln()).sum::<f64>();
        let mean_soft = acc_soft / n as f64;
        // exact std 1.15, three standard errors is about 0.011
        assert!(
            (mean_soft - (expected + alpha * h)).abs() < 0.011,
            "{mean_soft} vs {}",
            expected + alpha * h
        );
    }

    #[test]
    fn soft_target_differs_by_exactly_the_log_term() {
        for (q, lp, alpha) in [(1.5, -0.7, 0.3), (-2.0, -1.2, 1.0), (0.0, -0.01, 0.0)] {
            let q_row = arr1(&[q]);
            assert_eq!(soft_v_target(q, lp, alpha), v_target(&q_row, 0) - alpha * lp);
        }
    }

    #[test]
    fn entropy_estimate_is_exact_for_uniform_and_unbiased_generally() {
        // Uniform: every sample contributes the same -log p, zero variance.
        let logits = arr1(&[0.0, 0.0, 0.0, 0.0]);
        let lp = log_softmax(&logits);
        let mut rng = ChaCha8Rng::seed_from_u64(302);
        let sampled: Vec<f64> = (0..ENTROPY_SAMPLES)
            .map(|_| lp[sample_from_logits(&logits, &mut rng)])
            .collect();
        assert!((entropy_estimate(&sampled) - 4f64.ln()).abs() < 1e-15);

        // Skewed: the mean of -log pi over its own samples converges to H.
        let p: [f64; 3] = [0.5, 0.3, 0.2];
        let logits = arr1(&[p[0].ln(), p[1].ln(), p[2].ln()]);
        let lp = log_softmax(&logits);
        let n = 200_000;
        let sampled: Vec<f64> = (0..n)
            .map(|_| lp[sample_from_logits(&logits, &mut rng)])
            .collect();
        let h: f64 = -p.iter().map(|pi| pi * pi.ln()).sum::<f64>();
        // single-draw std 0.365, three standard errors is about 0.0025
        assert!((entropy_estimate(&sampled) - h).abs() < 0.0025);
    }

    #[test]
    fn projection_loss_vanishes_at_the_softmax_of_the_critic() {
        let alpha = 0.7;
        let q_values: Vec<f64> = vec![0.3, -1.0, 2.0, 0.1, 0.0, 0.5, -0.2, 1.4, 0.9, -0.7, 0.4, 0.2];
        let mut q_net = Net::tabular(3, 4);
        q_net.set_params(&q_values).unwrap();
        let mut policy = Net::tabular(3, 4);
        let scaled: Vec<f64> = q_values.iter().map(|q| q / alpha).collect();
        policy.set_params(&scaled).unwrap();

        let states: Vec<(usize, Vec<f64>)> = (0..3)
            .map(|s| {
                let mut obs = vec![0.0; 3];
                obs[s] = 1.0;
                (s, obs)
            })
            .collect();
        let (loss, grads) = projection_loss_and_grad(&states, &q_net, &policy, alpha).unwrap();
        assert!(loss.abs() < 1e-12, "loss {loss}");
        assert!(grads.flat().iter().all(|g| g.abs() < 1e-12));

        // And it is strictly positive away from the optimum.
        let mut off = Net::tabular(3, 4);
        let mut nudged = scaled.clone();
        nudged[0] += 0.3;
        off.set_params(&nudged).unwrap();
        let (loss_off, _) = projection_loss_and_grad(&states, &q_net, &off, alpha).unwrap();
        assert!(loss_off > 1e-4);
    }

    #[test]
    fn projection_rejects_zero_temperature_and_empty_batches() {
        let q_net = Net::tabular(2, 2);
        let policy = Net::tabular(2, 2);
        let states = vec![(0usize, vec![1.0, 0.0])];
        assert!(projection_loss_and_grad(&states, &q_net, &policy, 0.0).is_err());
        assert!(projection_loss_and_grad(&[], &q_net, &policy, 0.5).is_err());
    }

    #[test]
    fn repeated_policy_updates_converge_to_the_soft_improvement_policy() {
        let mdp = random_mdp(310, 3, 4, 0.9).unwrap();
        let q = mdp.reward().clone(); // any fixed table works as a critic
        let alpha = 0.5;
        let target = soft_improvement_step(&q, alpha).unwrap();

        let mut q_net = Net::tabular(3, 4);
        q_net
            .set_params(&q.iter().copied().collect::<Vec<f64>>())
            .unwrap();
        let mut policy = Net::tabular(3, 4);
        let mut opt = Optimizer::Adam(Adam::new(0.05, policy.n_params()));
        let states: Vec<(usize, Vec<f64>)> = (0..3)
            .map(|s| {
                let mut obs = vec![0.0; 3];
                obs[s] = 1.0;
                (s, obs)
            })
            .collect();
        let mut last = f64::INFINITY;
        for _ in 0..3000 {
            last = policy_update(&states, &q_net, &mut policy, &mut opt, alpha).unwrap();
        }
        assert!(last < 1e-9, "projection loss stuck at {last}");
        for s in 0..3 {
            let probs = softmax(&policy.forward(s, &states[s].1));
            for a in 0..4 {
                let diff = (probs[a] - target.probs()[[s, a]]).abs();
                assert!(diff < 1e-4, "state {s} action {a}: off by {diff}");
            }
        }
    }

    #[test]
    fn expected_q_target_realizes_the_bootstrap_operator() {
        // With V(s) = E_pi[Q(s, .)] and exact expectations over s' and the
        // entropy estimate, the sampled target reproduces the dense backup.
        let mdp = random_mdp(320, 5, 3, 0.9).unwrap();
        let pol = random_policy(321, 5, 3).unwrap();
        let q = earl_core::mdp::exact_policy_eval(&mdp, &pol, 0.3).unwrap();
        let alpha = 0.3;
        let gamma = mdp.discount();
        let h = policy_entropy(&pol);
        let probs = pol.probs();

        let mut v = vec![0.0; 5];
        for s in 0..5 {
            v[s] = (0..3).map(|a| probs[[s, a]] * q[[s, a]]).sum();
        }

        let dense = bootstrap_backup(&q, &mdp, &pol, alpha).unwrap();
        let mut worst = 0.0f64;
        for s in 0..5 {
            for a in 0..3 {
                let mut y = 0.0;
                for s2 in 0..5 {
                    let p = mdp.transition()[[s, a, s2]];
                    if p > 0.0 {
                        y += p * q_target(mdp.reward()[[s, a]], v[s2], h[s2], gamma, alpha, false);
                    }
                }
                worst = worst.max((y - dense[[s, a]]).abs());
            }
        }
        assert!(worst < 1e-12, "max gap {worst:.3e}");
    }

    #[test]
    fn monte_carlo_q_target_converges_to_the_dense_backup() {
        // Same identity, but estimated the way the trainer does: sampled
        // successor, five-action entropy estimate.
        let mdp = random_mdp(330, 4, 3, 0.9).unwrap();
        let pol = random_policy(331, 4, 3).unwrap();
        let q = earl_core::mdp::exact_policy_eval(&mdp, &pol, 0.2).unwrap();
        let alpha = 0.2;
        let gamma = mdp.discount();
        let probs = pol.probs();
        let mut v = vec![0.0; 4];
        for s in 0..4 {
            v[s] = (0..3).map(|a| probs[[s, a]] * q[[s, a]]).sum();
        }
        let dense = bootstrap_backup(&q, &mdp, &pol, alpha).unwrap();

        let (s, a) = (1, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(332);
        let n = 20_000;
        let mut samples = Vec::with_capacity(n);
        for _ in 0..n {
            // draw s' from the transition row
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut s2 = 3;
            for cand in 0..4 {
                acc += mdp.transition()[[s, a, cand]];
                if u < acc {
                    s2 = cand;
                    break;
                }
            }
            let row = Array1::from(
                (0..3).map(|aa| probs[[s2, aa]].ln()).collect::<Vec<f64>>(),
            );
            let lp = log_softmax(&row);
            let picks: Vec<f64> = (0..ENTROPY_SAMPLES)
                .map(|_| lp[sample_from_logits(&row, &mut rng)])
                .collect();
            let h_hat = entropy_estimate(&picks);
            samples.push(q_target(mdp.reward()[[s, a]], v[s2], h_hat, gamma, alpha, false));
        }
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
        let se = (var / n as f64).sqrt();
        let gap = (mean - dense[[s, a]]).abs();
        assert!(gap < 4.0 * se.max(1e-6), "gap {gap:.4e}, se {se:.4e}");
    }

    #[test]
    fn replay_buffer_overwrites_oldest_first() {
        let mut buf = ReplayBuffer::new(3).unwrap();
        for k in 1..=5 {
            buf.push(Stored {
                state: 0,
                action: 0,
                reward: k as f64,
                next_state: 0,
                done: false,
            });
        }
        assert_eq!(buf.len(), 3);
        let mut rng = ChaCha8Rng::seed_from_u64(340);
        let seen: std::collections::BTreeSet<u64> = buf
            .sample(3000, &mut rng)
            .iter()
            .map(|t| t.reward as u64)
            .collect();
        assert_eq!(seen.into_iter().collect::<Vec<_>>(), vec![3, 4, 5]);
    }

    #[test]
    fn replay_sampling_is_uniform_over_slots() {
        let mut buf = ReplayBuffer::new(10).unwrap();
        for k in 0..10 {
            buf.push(Stored {
                state: k,
                action: 0,
                reward: 0.0,
                next_state: 0,
                done: false,
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(341);
        let n = 1_000_000usize;
        let mut counts = [0usize; 10];
        for t in buf.sample(n, &mut rng) {
            counts[t.state] += 1;
        }
        let expect = n as f64 / 10.0;
        let mut chi2 = 0.0;
        for c in counts {
            let dev = (c as f64 - expect).abs() / expect;
            assert!(dev < 0.01, "slot deviation {dev:.4} above 1%");
            chi2 += (c as f64 - expect).powi(2) / expect;
        }
        // chi-square, 9 degrees of freedom, p = 0.001
        assert!(chi2 < 27.88, "chi2 {chi2:.2}");
    }

    #[test]
    fn replay_sampling_is_uniform_at_scale() {
        let mut buf = ReplayBuffer::new(1000).unwrap();
        for k in 0..1000 {
            buf.push(Stored {
                state: k,
                action: 0,
                reward: 0.0,
                next_state: 0,
                done: false,
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(342);
        let n = 1_000_000usize;
        let mut counts = vec![0usize; 1000];
        for t in buf.sample(n, &mut rng) {
            counts[t.state] += 1;
        }
        let expect = n as f64 / 1000.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expect).powi(2) / expect)
            .sum();
        // chi-square, 999 degrees of freedom, p ~ 0.001
        assert!(chi2 < 1145.0, "chi2 {chi2:.1}");
    }

    #[test]
    fn polyak_mixes_parameters_convexly() {
        let env = DiagonalEnv::with_shape(2, 10);
        let mut nets = SacNets::new(&env, ModelKind::Tabular, 0.25, 1).unwrap();
        let n = nets.value.n_params();
        let v: Vec<f64> = (0..n).map(|k| k as f64).collect();
        let t: Vec<f64> = (0..n).map(|k| -(k as f64)).collect();
        nets.value.set_params(&v).unwrap();
        nets.target_value.set_params(&t).unwrap();
        nets.polyak();
        for (k, ti) in nets.target_value.params().iter().enumerate() {
            let want = 0.75 * -(k as f64) + 0.25 * k as f64;
            assert!((ti - want).abs() < 1e-12);
        }

        nets.tau = 1.0;
        nets.polyak();
        for (vi, ti) in nets.value.params().iter().zip(nets.target_value.params()) {
            assert_eq!(*vi, ti);
        }
    }

    #[test]
    fn config_validation_rejects_bad_settings() {
        assert!(SacConfig::defaults(ModelKind::Tabular).validate().is_ok());
        let good = SacConfig::defaults(ModelKind::Tabular);
        for bad in [
            SacConfig { batch: 0, ..good.clone() },
            SacConfig { capacity: 1, batch: 2, ..good.clone() },
            SacConfig { gamma: 1.0, ..good.clone() },
            SacConfig { tau: 0.0, ..good.clone() },
        ] {
            assert!(bad.validate().is_err());
        }

        // The trainer itself refuses a dead temperature.
        let mut env = DiagonalEnv::with_shape(2, 10);
        let schedule = TemperatureSchedule::constant(0.0).unwrap();
        assert!(sac_train(&mut env, &good, &schedule, 1).is_err());
    }

    fn smoke_config() -> SacConfig {
        SacConfig {
            model: ModelKind::Tabular,
            capacity: 5_000,
            batch: 32,
            tau: 0.05,
            q_lr: 0.05,
            value_lr: 0.05,
            policy_lr: 0.05,
            gamma: 0.95,
            total_steps: 6_000,
            metric_window: 500,
            warmup: 300,
        }
    }

    #[test]
    fn sac_learns_the_small_corner_world() {
        let mut env = DiagonalEnv::with_shape(4, 40);
        let schedule = TemperatureSchedule::exponential(0.5, 0.8).unwrap();
        let run = sac_train(&mut env, &smoke_config(), &schedule, 7).unwrap();
        assert_eq!(run.metrics.len(), 12);
        let last = run.metrics.last().unwrap();
        assert!(
            last.raw_return_mean > 4.0,
            "final window mean {:.2}",
            last.raw_return_mean
        );
        // The policy must sharpen well below the ln 4 start.
        assert!(last.entropy_mean < 1.0, "entropy {:.3}", last.entropy_mean);
        assert!(last.buffer_size > 0 && last.buffer_size <= 5_000);
        for m in &run.metrics {
            assert!(m.policy_loss.is_finite());
            assert!(m.value_loss.is_finite());
            assert!(m.target_divergence.is_finite());
        }
    }

    #[test]
    fn sac_training_is_deterministic() {
        let config = SacConfig {
            total_steps: 1_200,
            metric_window: 400,
            ..smoke_config()
        };
        let schedule = TemperatureSchedule::constant(0.3).unwrap();
        let run = |seed: u64| {
            let mut env = DiagonalEnv::with_shape(3, 20);
            sac_train(&mut env, &config, &schedule, seed).unwrap()
        };
        let a = run(11);
        let b = run(11);
        assert_eq!(a.metrics.len(), b.metrics.len());
        for (ma, mb) in a.metrics.iter().zip(b.metrics.iter()) {
            assert_eq!(ma.raw_return_mean.to_bits(), mb.raw_return_mean.to_bits());
            assert_eq!(ma.policy_loss.to_bits(), mb.policy_loss.to_bits());
            assert_eq!(ma.value_loss.to_bits(), mb.value_loss.to_bits());
            assert_eq!(ma.target_divergence.to_bits(), mb.target_divergence.to_bits());
        }
        for (pa, pb) in a.nets.policy.params().iter().zip(b.nets.policy.params().iter()) {
            assert_eq!(pa.to_bits(), pb.to_bits());
        }
    }
}
