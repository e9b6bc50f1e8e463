//! Seeded random instances for audit corpora.

use ndarray::{Array1, Array2, Array3};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::mdp::{TabularMDP, TabularPolicy};

/// Random dense MDP: every transition row is a flat-Dirichlet draw, rewards
/// are uniform in [-1, 1], and the start distribution is a flat-Dirichlet
/// draw as well. Deterministic in the seed.
pub fn random_mdp(seed: u64, n_states: usize, n_actions: usize, discount: f64) -> Result<TabularMDP> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut transition = Array3::zeros((n_states, n_actions, n_states));
    for s in 0..n_states {
        for a in 0..n_actions {
            let row = dirichlet_row(&mut rng, n_states);
            for (s2, p) in row.into_iter().enumerate() {
                transition[[s, a, s2]] = p;
            }
        }
    }
    let mut reward = Array2::zeros((n_states, n_actions));
    for r in reward.iter_mut() {
        *r = rng.gen_range(-1.0..=1.0);
    }
    let initial = Array1::from_vec(dirichlet_row(&mut rng, n_states));
    TabularMDP::new(transition, reward, discount, initial)
}

/// Random interior policy (flat-Dirichlet rows), deterministic in the seed.
pub fn random_policy(seed: u64, n_states: usize, n_actions: usize) -> Result<TabularPolicy> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probs = Array2::zeros((n_states, n_actions));
    for s in 0..n_states {
        let row = dirichlet_row(&mut rng, n_actions);
        for (a, p) in row.into_iter().enumerate() {
            probs[[s, a]] = p;
        }
    }
    TabularPolicy::new(probs)
}

/// Flat Dirichlet via normalized unit exponentials.
fn dirichlet_row(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut row: Vec<f64> = (0..n).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let sum: f64 = row.iter().sum();
    for p in row.iter_mut() {
        *p /= sum;
    }
    // Renormalization drift is below the simplex tolerance, but pin the sum
    // exactly by folding the residue into the largest entry.
    let drift: f64 = row.iter().sum::<f64>() - 1.0;
    if drift != 0.0 {
        let imax = row
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap();
        row[imax] -= drift;
    }
    row
}

/// Random interior perturbation of `base` with max-KL(base || out) at most
/// `kl_budget`: rows are tilted by a bounded random log-factor, then the tilt
/// is shrunk until the divergence fits.
pub fn nearby_policy(base: &TabularPolicy, kl_budget: f64, seed: u64) -> Result<TabularPolicy> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, m) = base.probs().dim();
    let noise = Array2::from_shape_fn((n, m), |_| rng.gen_range(-1.0..1.0));
    let mut scale = 0.5f64;
    loop {
        let mut probs = Array2::zeros((n, m));
        for s in 0..n {
            let mut sum = 0.0;
            for a in 0..m {
                let p = base.probs()[[s, a]] * (scale * noise[[s, a]]).exp();
                probs[[s, a]] = p;
                sum += p;
            }
            for a in 0..m {
                probs[[s, a]] /= sum;
            }
            let drift: f64 = probs.row(s).sum() - 1.0;
            if drift != 0.0 {
                let imax = (0..m).max_by(|&i, &j| probs[[s, i]].total_cmp(&probs[[s, j]])).unwrap();
                probs[[s, imax]] -= drift;
            }
        }
        let candidate = TabularPolicy::new(probs)?;
        if crate::operators::max_kl(base, &candidate) <= kl_budget {
            return Ok(candidate);
        }
        scale *= 0.7;
    }
}
