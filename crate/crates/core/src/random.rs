//! Random problem instances for property checks.

use rand::{Rng, RngCore};

use crate::mdp::{SparseActionMdp, StochasticPolicy};
use crate::soft_bellman::{QFunction, SparsityDistribution};

/// Random probability vector with every entry at least `floor / n`.
pub fn random_distribution(rng: &mut dyn RngCore, n: usize, floor: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| floor / n as f64 + rng.random::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

/// Dense random MDP with rewards in `[-1, 1]` and no budgets.
pub fn random_mdp(rng: &mut dyn RngCore, num_states: usize, num_actions: usize, discount: f64) -> SparseActionMdp {
    let mut transition = Vec::with_capacity(num_states * num_actions * num_states);
    for _ in 0..num_states * num_actions {
        transition.extend(random_distribution(rng, num_states, 0.0));
    }
    let reward = (0..num_states * num_actions).map(|_| rng.random_range(-1.0..=1.0)).collect();
    let initial = random_distribution(rng, num_states, 0.0);
    SparseActionMdp::new(num_states, num_actions, transition, reward, discount, initial)
        .expect("random MDP is well formed")
}

pub fn random_policy(rng: &mut dyn RngCore, num_states: usize, num_actions: usize) -> StochasticPolicy {
    let probs = (0..num_states).flat_map(|_| random_distribution(rng, num_actions, 0.0)).collect();
    StochasticPolicy::new(num_states, num_actions, probs).expect("rows are normalized")
}

/// Strictly positive random prior.
pub fn random_prior(rng: &mut dyn RngCore, num_actions: usize) -> SparsityDistribution {
    SparsityDistribution::new(random_distribution(rng, num_actions, 0.05)).expect("strictly positive")
}

/// Q-table with entries uniform in `[-scale, scale]`.
pub fn random_q(rng: &mut dyn RngCore, num_states: usize, num_actions: usize, scale: f64) -> QFunction {
    let values = (0..num_states * num_actions).map(|_| rng.random_range(-scale..=scale)).collect();
    QFunction::from_values(num_states, num_actions, values).expect("finite")
}
