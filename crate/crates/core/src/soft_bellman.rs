//! KL-to-prior regularized Bellman operators and exact solvers.
//!
//! With a prior `p̃` over actions and coefficient `λ > 0`, the regularized
//! optimality operator is
//!
//! ```text
//! (T Q)(s, a) = r(s, a) + γ Σ_{s'} P(s'|s, a) · λ log Σ_{a'} p̃(a') exp(Q(s', a') / λ)
//! ```
//!
//! Its fixed point `Q*_Ω` induces the policy `π(a|s) ∝ p̃(a) exp(Q*_Ω(s, a) / λ)`.
//! Every exponential here goes through a max-shifted log-sum-exp: with
//! `λ = 0.005` a raw `exp(Q/λ)` overflows once `|Q|` exceeds about 3.5.

use crate::error::{Error, Result};
use crate::mdp::{argmax, max_abs_diff, SparseActionMdp, StochasticPolicy, STOCHASTIC_TOL};

pub const DEFAULT_LAMBDA: f64 = 0.01;
pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITERS: usize = 100_000;

/// Strictly positive probability vector over actions.
#[derive(Clone, Debug, PartialEq)]
pub struct SparsityDistribution {
    probs: Vec<f64>,
}

impl SparsityDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidModel("empty sparsity distribution".into()));
        }
        if probs.iter().any(|p| !p.is_finite() || *p <= 0.0) {
            return Err(Error::InvalidModel("sparsity distribution must be strictly positive".into()));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::InvalidModel(format!("sparsity distribution sums to {sum}")));
        }
        Ok(Self { probs })
    }

    pub fn uniform(num_actions: usize) -> Self {
        Self {
            probs: vec![1.0 / num_actions as f64; num_actions],
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// `max_a log(1 / p̃(a))`, the largest KL any policy can reach.
    pub fn max_log_inverse(&self) -> f64 {
        self.probs.iter().map(|p| -p.ln()).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Coefficient of the KL penalty.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegularizationConfig {
    lambda: f64,
}

impl RegularizationConfig {
    pub fn new(lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        Ok(Self { lambda })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

impl Default for RegularizationConfig {
    fn default() -> Self {
        Self { lambda: DEFAULT_LAMBDA }
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::Contract(format!("lambda must be finite and > 0, got {lambda}")));
    }
    Ok(())
}

/// Dense `Q[s][a]` table.
#[derive(Clone, Debug, PartialEq)]
pub struct QFunction {
    num_states: usize,
    num_actions: usize,
    values: Vec<f64>,
}

impl QFunction {
    pub fn zeros(num_states: usize, num_actions: usize) -> Self {
        Self {
            num_states,
            num_actions,
            values: vec![0.0; num_states * num_actions],
        }
    }

    pub fn from_values(num_states: usize, num_actions: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != num_states * num_actions {
            return Err(Error::Shape {
                expected: format!("{} entries", num_states * num_actions),
                got: values.len().to_string(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Q values".into()));
        }
        Ok(Self {
            num_states,
            num_actions,
            values,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    #[inline]
    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.num_actions + a]
    }

    #[inline]
    pub fn set(&mut self, s: usize, a: usize, v: f64) {
        self.values[s * self.num_actions + a] = v;
    }

    #[inline]
    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.num_actions..(s + 1) * self.num_actions]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// `‖self − other‖∞`.
    pub fn sup_distance(&self, other: &QFunction) -> f64 {
        max_abs_diff(&self.values, &other.values)
    }

    /// `max_a Q(s, a)` per state.
    pub fn max_values(&self) -> Vec<f64> {
        (0..self.num_states)
            .map(|s| self.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect()
    }

    fn check_against(&self, mdp: &SparseActionMdp) -> Result<()> {
        if self.num_states != mdp.num_states() || self.num_actions != mdp.num_actions() {
            return Err(Error::Shape {
                expected: format!("{}x{} Q", mdp.num_states(), mdp.num_actions()),
                got: format!("{}x{}", self.num_states, self.num_actions),
            });
        }
        Ok(())
    }
}

/// `temperature · log Σ_i w_i exp(x_i / temperature)` with max subtraction.
///
/// Entries with zero weight are skipped. Inputs are assumed finite.
pub fn weighted_log_sum_exp(values: &[f64], weights: &[f64], temperature: f64) -> f64 {
    let shift = values
        .iter()
        .zip(weights)
        .filter(|(_, w)| **w > 0.0)
        .map(|(v, _)| *v)
        .fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = values
        .iter()
        .zip(weights)
        .filter(|(_, w)| **w > 0.0)
        .map(|(v, w)| w * ((v - shift) / temperature).exp())
        .sum();
    shift + temperature * sum.ln()
}

/// `π_i ∝ w_i exp(x_i / temperature)`, normalized, with max subtraction.
pub fn weighted_softmax(values: &[f64], weights: &[f64], temperature: f64) -> Vec<f64> {
    let shift = values
        .iter()
        .zip(weights)
        .filter(|(_, w)| **w > 0.0)
        .map(|(v, _)| *v)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = values
        .iter()
        .zip(weights)
        .map(|(v, w)| if *w > 0.0 { w * ((v - shift) / temperature).exp() } else { 0.0 })
        .collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= total);
    out
}

/// `λ log Σ_a p̃(a) exp(Q[a] / λ)`.
pub fn soft_value(q_row: &[f64], prior: &SparsityDistribution, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    if q_row.len() != prior.len() {
        return Err(Error::Shape {
            expected: format!("{} action values", prior.len()),
            got: q_row.len().to_string(),
        });
    }
    if q_row.iter().any(|q| !q.is_finite()) {
        return Err(Error::NonFinite("Q row".into()));
    }
    Ok(weighted_log_sum_exp(q_row, prior.probs(), lambda))
}

/// Soft state values `V(s) = λ log E_{p̃}[exp(Q(s,·)/λ)]`.
pub fn soft_values(q: &QFunction, prior: &SparsityDistribution, lambda: f64) -> Result<Vec<f64>> {
    (0..q.num_states()).map(|s| soft_value(q.row(s), prior, lambda)).collect()
}

fn check_prior(prior: &SparsityDistribution, num_actions: usize) -> Result<()> {
    if prior.len() != num_actions {
        return Err(Error::Shape {
            expected: format!("prior over {num_actions} actions"),
            got: prior.len().to_string(),
        });
    }
    Ok(())
}

fn backup(mdp: &SparseActionMdp, next_values: &[f64]) -> QFunction {
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    let gamma = mdp.discount();
    let mut out = QFunction::zeros(ns, na);
    for s in 0..ns {
        for a in 0..na {
            out.set(s, a, mdp.reward(s, a) + gamma * mdp.expected_next(s, a, next_values));
        }
    }
    out
}

/// One application of the regularized optimality operator.
pub fn regularized_bellman_apply(
    mdp: &SparseActionMdp,
    q: &QFunction,
    prior: &SparsityDistribution,
    lambda: f64,
) -> Result<QFunction> {
    q.check_against(mdp)?;
    check_prior(prior, mdp.num_actions())?;
    let v = soft_values(q, prior, lambda)?;
    Ok(backup(mdp, &v))
}

/// One application of the standard optimality operator `r + γ E[max_a' Q]`.
pub fn standard_bellman_apply(mdp: &SparseActionMdp, q: &QFunction) -> Result<QFunction> {
    q.check_against(mdp)?;
    Ok(backup(mdp, &q.max_values()))
}

/// Iterates `op` from `Q ≡ 0` until `‖op(Q) − Q‖∞ ≤ tol`.
///
/// Returns the last iterate and the number of operator applications that
/// produced it.
fn iterate_to_fixed_point(
    mdp: &SparseActionMdp,
    tol: f64,
    max_iters: usize,
    op: impl Fn(&QFunction) -> Result<QFunction>,
) -> Result<(QFunction, usize)> {
    if !(tol > 0.0) {
        return Err(Error::Contract(format!("tolerance must be > 0, got {tol}")));
    }
    let mut q = QFunction::zeros(mdp.num_states(), mdp.num_actions());
    let mut residual = f64::INFINITY;
    for k in 0..=max_iters {
        let next = op(&q)?;
        residual = next.sup_distance(&q);
        if residual <= tol {
            return Ok((q, k));
        }
        q = next;
    }
    Err(Error::NotConverged {
        iterations: max_iters,
        residual,
    })
}

/// `Q*_Ω` by fixed-point iteration of [`regularized_bellman_apply`].
pub fn regularized_value_iteration(
    mdp: &SparseActionMdp,
    prior: &SparsityDistribution,
    lambda: f64,
    tol: f64,
    max_iters: usize,
) -> Result<(QFunction, usize)> {
    check_lambda(lambda)?;
    check_prior(prior, mdp.num_actions())?;
    iterate_to_fixed_point(mdp, tol, max_iters, |q| regularized_bellman_apply(mdp, q, prior, lambda))
}

/// Unregularized `Q*` by value iteration.
pub fn standard_value_iteration(mdp: &SparseActionMdp, tol: f64) -> Result<QFunction> {
    iterate_to_fixed_point(mdp, tol, DEFAULT_MAX_ITERS, |q| standard_bellman_apply(mdp, q)).map(|(q, _)| q)
}

/// `π(a|s) ∝ p̃(a) exp(Q(s,a) / λ)`.
pub fn extract_regularized_policy(
    q: &QFunction,
    prior: &SparsityDistribution,
    lambda: f64,
) -> Result<StochasticPolicy> {
    check_lambda(lambda)?;
    check_prior(prior, q.num_actions())?;
    let probs = (0..q.num_states())
        .flat_map(|s| weighted_softmax(q.row(s), prior.probs(), lambda))
        .collect();
    StochasticPolicy::new(q.num_states(), q.num_actions(), probs)
}

/// Deterministic argmax policy, lowest index on ties.
pub fn greedy_policy(q: &QFunction) -> StochasticPolicy {
    let actions: Vec<usize> = (0..q.num_states()).map(|s| argmax(q.row(s))).collect();
    StochasticPolicy::deterministic(q.num_actions(), &actions).expect("argmax is in range")
}

/// `Σ_a p(a) log(p(a) / q(a))` with `0 log 0 = 0`.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Shape {
            expected: format!("{} entries", q.len()),
            got: p.len().to_string(),
        });
    }
    let mut total = 0.0;
    for (&pa, &qa) in p.iter().zip(q) {
        if pa == 0.0 {
            continue;
        }
        if qa <= 0.0 {
            return Err(Error::Contract("KL reference has zero mass where p is positive".into()));
        }
        total += pa * (pa / qa).ln();
    }
    // Rounding can push identical distributions a hair below zero.
    Ok(total.max(0.0))
}

/// `V^π_Ω`: expected discounted reward minus `λ · KL(π(·|s), p̃)` at every
/// visited state, solved exactly.
pub fn regularized_return(
    mdp: &SparseActionMdp,
    policy: &StochasticPolicy,
    prior: &SparsityDistribution,
    lambda: f64,
) -> Result<Vec<f64>> {
    check_lambda(lambda)?;
    check_prior(prior, mdp.num_actions())?;
    mdp.check_policy_shape(policy)?;
    policy.validate()?;
    let reward_pi = (0..mdp.num_states())
        .map(|s| {
            let expected: f64 = (0..mdp.num_actions()).map(|a| policy.prob(s, a) * mdp.reward(s, a)).sum();
            Ok(expected - lambda * kl_divergence(policy.row(s), prior.probs())?)
        })
        .collect::<Result<Vec<f64>>>()?;
    mdp.evaluate_with_rewards(policy, &reward_pi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{random_mdp, random_prior, random_q};
    use crate::rng::seeded;

    fn single_state(reward: f64, gamma: f64) -> SparseActionMdp {
        SparseActionMdp::new(1, 1, vec![1.0], vec![reward], gamma, vec![1.0]).unwrap()
    }

    /// Straight-line `T*_Ω` over every `(s, a, s', a')` without any shift.
    fn naive_apply(mdp: &SparseActionMdp, q: &QFunction, prior: &[f64], lambda: f64) -> Vec<f64> {
        let (ns, na) = (mdp.num_states(), mdp.num_actions());
        let mut out = vec![0.0; ns * na];
        for s in 0..ns {
            for a in 0..na {
                let mut cont = 0.0;
                for s2 in 0..ns {
                    let mut inner = 0.0;
                    for a2 in 0..na {
                        inner += prior[a2] * (q.get(s2, a2) / lambda).exp();
                    }
                    cont += mdp.transition_row(s, a)[s2] * lambda * inner.ln();
                }
                out[s * na + a] = mdp.reward(s, a) + mdp.discount() * cont;
            }
        }
        out
    }

    #[test]
    fn soft_value_examples() {
        let uniform = SparsityDistribution::uniform(2);
        assert_eq!(soft_value(&[0.0, 0.0], &uniform, 1.0).unwrap(), 0.0);
        // ln(0.5 e + 0.5)
        let v = soft_value(&[1.0, 0.0], &uniform, 1.0).unwrap();
        assert!((v - 0.620_114_506_958_277_5).abs() < 1e-12);
        let prior = SparsityDistribution::new(vec![0.2, 0.3, 0.5]).unwrap();
        for lambda in [1e-3, 0.01, 1.0, 50.0] {
            let v = soft_value(&[3.25, 3.25, 3.25], &prior, lambda).unwrap();
            assert!((v - 3.25).abs() < 1e-12);
        }
    }

    #[test]
    fn soft_value_rejects_bad_input() {
        let uniform = SparsityDistribution::uniform(2);
        assert!(soft_value(&[f64::NAN, 0.0], &uniform, 1.0).is_err());
        assert!(soft_value(&[0.0, 0.0], &uniform, 0.0).is_err());
        assert!(soft_value(&[0.0], &uniform, 1.0).is_err());
    }

    #[test]
    fn soft_value_survives_tiny_lambda() {
        let uniform = SparsityDistribution::uniform(3);
        let v = soft_value(&[50.0, -20.0, 49.0], &uniform, 0.005).unwrap();
        assert!(v.is_finite());
        assert!(v <= 50.0 && v >= 50.0 - 0.005 * 3f64.ln());
    }

    #[test]
    fn zero_discount_returns_reward() {
        let mut rng = seeded(1);
        let mdp = random_mdp(&mut rng, 3, 2, 0.0);
        let q = random_q(&mut rng, 3, 2, 5.0);
        let out = regularized_bellman_apply(&mdp, &q, &random_prior(&mut rng, 2), 0.1).unwrap();
        assert_eq!(out.values(), mdp.reward_table());
    }

    #[test]
    fn constant_q_shifts_by_discounted_constant() {
        // deterministic cycle 0 -> 1 -> 0 under both actions
        let transition = vec![0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0];
        let mdp = SparseActionMdp::new(2, 2, transition, vec![0.5, -1.0, 2.0, 0.0], 0.9, vec![1.0, 0.0]).unwrap();
        let q = QFunction::from_values(2, 2, vec![1.5; 4]).unwrap();
        let prior = SparsityDistribution::new(vec![0.1, 0.9]).unwrap();
        let out = regularized_bellman_apply(&mdp, &q, &prior, 0.01).unwrap();
        for s in 0..2 {
            for a in 0..2 {
                assert!((out.get(s, a) - (mdp.reward(s, a) + 0.9 * 1.5)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn apply_matches_naive_enumeration() {
        let mut rng = seeded(2);
        for _ in 0..10 {
            let mdp = random_mdp(&mut rng, 2, 2, 0.9);
            let q = random_q(&mut rng, 2, 2, 1.0);
            let prior = random_prior(&mut rng, 2);
            let out = regularized_bellman_apply(&mdp, &q, &prior, 0.5).unwrap();
            let naive = naive_apply(&mdp, &q, prior.probs(), 0.5);
            assert!(max_abs_diff(out.values(), &naive) < 1e-12);
        }
    }

    #[test]
    fn value_iteration_examples() {
        let mdp = single_state(1.0, 0.5);
        let (q, _) =
            regularized_value_iteration(&mdp, &SparsityDistribution::uniform(1), 0.3, DEFAULT_TOL, DEFAULT_MAX_ITERS)
                .unwrap();
        assert!((q.get(0, 0) - 2.0).abs() < 1e-9);

        let mut rng = seeded(4);
        let zero = random_mdp(&mut rng, 3, 2, 0.9).map_rewards(|_| 0.0);
        let (q, iters) = regularized_value_iteration(&zero, &random_prior(&mut rng, 2), 0.05, 1e-10, 100).unwrap();
        assert!(q.values().iter().all(|v| *v == 0.0));
        assert_eq!(iters, 0);

        let q = standard_value_iteration(&single_state(1.0, 0.9), DEFAULT_TOL).unwrap();
        assert!((q.get(0, 0) - 10.0).abs() < 1e-8);
    }

    #[test]
    fn value_iteration_reports_non_convergence() {
        let mdp = single_state(1.0, 0.99);
        let err = regularized_value_iteration(&mdp, &SparsityDistribution::uniform(1), 0.1, 1e-10, 5).unwrap_err();
        match err {
            Error::NotConverged { iterations, residual } => {
                assert_eq!(iterations, 5);
                assert!(residual > 1e-10);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(regularized_value_iteration(&mdp, &SparsityDistribution::uniform(1), 0.1, 0.0, 5).is_err());
    }

    #[test]
    fn value_iteration_respects_iteration_bound() {
        let mut rng = seeded(8);
        for gamma in [0.5, 0.9, 0.99] {
            let mdp = random_mdp(&mut rng, 3, 2, gamma);
            let prior = random_prior(&mut rng, 2);
            let lambda = 0.01;
            let tol = 1e-10;
            let (q, iters) = regularized_value_iteration(&mdp, &prior, lambda, tol, DEFAULT_MAX_ITERS).unwrap();
            let tq = regularized_bellman_apply(&mdp, &q, &prior, lambda).unwrap();
            assert!(tq.sup_distance(&q) <= tol);
            let zero = QFunction::zeros(3, 2);
            let r0 = regularized_bellman_apply(&mdp, &zero, &prior, lambda).unwrap().sup_distance(&zero);
            let bound = ((tol * (1.0 - gamma) / r0).ln() / gamma.ln()).ceil() as usize + 1;
            assert!(iters <= bound, "{iters} > {bound}");
        }
    }

    #[test]
    fn standard_value_iteration_shift() {
        let mut rng = seeded(10);
        let mdp = random_mdp(&mut rng, 4, 3, 0.9);
        let base = standard_value_iteration(&mdp, 1e-11).unwrap();
        let shifted = standard_value_iteration(&mdp.map_rewards(|r| r + 2.0), 1e-11).unwrap();
        for (a, b) in base.values().iter().zip(shifted.values()) {
            assert!((b - a - 20.0).abs() < 1e-8);
        }
    }

    #[test]
    fn extraction_examples() {
        let prior = SparsityDistribution::new(vec![0.1, 0.6, 0.3]).unwrap();
        let q = QFunction::from_values(1, 3, vec![4.0, 4.0, 4.0]).unwrap();
        let pi = extract_regularized_policy(&q, &prior, 0.01).unwrap();
        for a in 0..3 {
            assert!((pi.prob(0, a) - prior.probs()[a]).abs() < 1e-15);
        }

        let lambda = 0.2;
        let q = QFunction::from_values(1, 2, vec![lambda * 2f64.ln(), 0.0]).unwrap();
        let pi = extract_regularized_policy(&q, &SparsityDistribution::uniform(2), lambda).unwrap();
        assert!((pi.prob(0, 0) - 2.0 / 3.0).abs() < 1e-12);
        assert!((pi.prob(0, 1) - 1.0 / 3.0).abs() < 1e-12);

        let q = QFunction::from_values(2, 3, vec![0.1, 0.3, 0.2, -1.0, -2.0, -1.5]).unwrap();
        let pi = extract_regularized_policy(&q, &prior, 1e-6).unwrap();
        assert_eq!(pi.mode(0), 1);
        assert_eq!(pi.mode(1), 0);
    }

    #[test]
    fn kl_examples() {
        let p = [0.2, 0.5, 0.3];
        assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
        let kl = kl_divergence(&[1.0, 0.0], &[0.5, 0.5]).unwrap();
        assert!((kl - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(kl_divergence(&[0.5, 0.5], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn regularized_return_examples() {
        let mut rng = seeded(12);
        let mdp = random_mdp(&mut rng, 3, 3, 0.9);
        let prior = random_prior(&mut rng, 3);
        let pi = StochasticPolicy::state_independent(3, prior.probs()).unwrap();
        let plain = mdp.exact_policy_evaluation(&pi).unwrap();
        let reg = regularized_return(&mdp, &pi, &prior, 0.7).unwrap();
        assert!(max_abs_diff(&plain, &reg) < 1e-12);

        let other = crate::random::random_policy(&mut rng, 3, 3);
        let plain = mdp.exact_policy_evaluation(&other).unwrap();
        let reg = regularized_return(&mdp, &other, &prior, 1e-12).unwrap();
        assert!(max_abs_diff(&plain, &reg) < 1e-9);
    }

    #[test]
    fn regularized_return_of_optimal_policy_is_soft_value() {
        let mut rng = seeded(13);
        let mdp = random_mdp(&mut rng, 2, 2, 0.9);
        let prior = random_prior(&mut rng, 2);
        let lambda = 0.3;
        let (q, _) = regularized_value_iteration(&mdp, &prior, lambda, 1e-12, DEFAULT_MAX_ITERS).unwrap();
        let pi = extract_regularized_policy(&q, &prior, lambda).unwrap();
        let v = regularized_return(&mdp, &pi, &prior, lambda).unwrap();
        let soft = soft_values(&q, &prior, lambda).unwrap();
        assert!(max_abs_diff(&v, &soft) < 1e-8);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn row_and_prior() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, f64)> {
            (1usize..6).prop_flat_map(|n| {
                (
                    prop::collection::vec(-50.0f64..50.0, n),
                    prop::collection::vec(0.01f64..1.0, n),
                    prop_oneof![Just(0.005), Just(0.01), 0.001f64..10.0],
                )
            })
        }

        proptest! {
            #[test]
            fn soft_value_sandwich((row, raw, lambda) in row_and_prior()) {
                let total: f64 = raw.iter().sum();
                let prior = SparsityDistribution::new(raw.iter().map(|x| x / total).collect()).unwrap();
                let v = soft_value(&row, &prior, lambda).unwrap();
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let min_p = prior.probs().iter().copied().fold(f64::INFINITY, f64::min);
                prop_assert!(v <= max + 1e-12);
                prop_assert!(v >= max - lambda * (1.0 / min_p).ln() - 1e-12);
            }

            #[test]
            fn extracted_rows_are_normalized((row, raw, lambda) in row_and_prior()) {
                let total: f64 = raw.iter().sum();
                let prior = SparsityDistribution::new(raw.iter().map(|x| x / total).collect()).unwrap();
                let q = QFunction::from_values(1, row.len(), row).unwrap();
                let pi = extract_regularized_policy(&q, &prior, lambda).unwrap();
                prop_assert!((pi.row(0).iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            }

            #[test]
            fn kl_is_bounded_by_max_log_inverse(
                (p_raw, q_raw) in (1usize..6).prop_flat_map(|n| (
                    prop::collection::vec(0.0f64..1.0, n),
                    prop::collection::vec(0.01f64..1.0, n),
                ))
            ) {
                prop_assume!(p_raw.iter().sum::<f64>() > 0.0);
                let ps: f64 = p_raw.iter().sum();
                let qs: f64 = q_raw.iter().sum();
                let p: Vec<f64> = p_raw.iter().map(|x| x / ps).collect();
                let prior = SparsityDistribution::new(q_raw.iter().map(|x| x / qs).collect()).unwrap();
                let kl = kl_divergence(&p, prior.probs()).unwrap();
                prop_assert!(kl >= 0.0);
                prop_assert!(kl <= prior.max_log_inverse() + 1e-12);
            }
        }
    }
}
