//! Sparsity-regularized Q-learning.
//!
//! Training alternates two loops. Every `N` episodes a discounted-UCB bandit
//! picks one action to *constrain*; the behavior policy then samples
//!
//! ```text
//! π̃(a|s) ∝ d(a) exp(Q(s, a))      d(constrained) = δ, d(other) = (1 − δ)/(|A| − 1)
//! ```
//!
//! and, at the end of the round, the bandit is credited with the mean episodic
//! return. The bandit means `μ` define the sparsity distribution
//! `p̃(a) ∝ exp(−μ(a))`. Meanwhile every environment step performs one
//! replay update toward the soft target
//! `y = r + γ λ log E_{a'~p̃}[exp(Q_θ̄(s', a')/λ)]` followed by a Polyak step on
//! the target copy. The learned policy is `π(a|s) ∝ p̃(a) exp(Q_θ(s, a)/λ)`.

mod learner;
mod qparams;
mod replay;

use rand::RngCore;
use serde::{Deserialize, Serialize};

pub use learner::EvaluationConfig;
pub(crate) use learner::{
    compute_targets, run as run_learner, sample_boltzmann, EvalRule, Explorer, LearnerSettings, TargetRule,
};
pub use qparams::{FeatureMap, LinearQ, QModel, QParams, QRepresentation};
pub use replay::ReplayBuffer;

use crate::bandit::{DUcbState, RewardNormalizer};
use crate::error::{Error, Result};
use crate::mdp::{SparseActionMdp, StochasticPolicy, Transition};
use crate::record::RunRecord;
use crate::soft_bellman::{extract_regularized_policy, weighted_softmax, SparsityDistribution};

/// Temperature of the constrained behavior policy.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BehaviorTemperature {
    /// `exp(Q)`.
    #[default]
    Unit,
    /// `exp(Q / λ)`, matching the extracted policy.
    Lambda,
}

/// What the bandit is credited with after a round.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BanditReward {
    /// Mean undiscounted episode return.
    #[default]
    Undiscounted,
    /// Mean discounted episode return.
    Discounted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    /// KL coefficient `λ`.
    pub lambda: f64,
    /// Episodes per bandit round (`N`).
    pub sparsity_eval_episodes: usize,
    pub batch_size: usize,
    pub learn_rate: f64,
    pub polyak: f64,
    /// Probability mass `δ` on the constrained action; `1/(8|A|)` when unset.
    pub delta: Option<f64>,
    pub bandit_c: f64,
    pub bandit_discount: f64,
    pub buffer_capacity: usize,
    pub q_representation: QRepresentation,
    pub behavior_temperature: BehaviorTemperature,
    pub bandit_reward: BanditReward,
    /// Min-max rescale bandit rewards with running bounds.
    pub normalize_bandit_reward: bool,
    /// When false, targets use a plain max and the learned policy is greedy.
    pub sparsity_regularization: bool,
    /// Pin `p̃` to this distribution instead of deriving it from the bandit.
    pub fixed_prior: Option<Vec<f64>>,
    /// Bootstrap through horizon truncation (true terminals never bootstrap).
    pub bootstrap_on_truncation: bool,
    /// Evaluate the greedy policy instead of sampling `π ∝ p̃ exp(Q/λ)`.
    pub greedy_eval: bool,
    pub evaluation: EvaluationConfig,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            lambda: 0.01,
            sparsity_eval_episodes: 30,
            batch_size: 256,
            learn_rate: 0.001,
            polyak: 0.005,
            delta: None,
            bandit_c: crate::bandit::DEFAULT_EXPLORATION,
            bandit_discount: crate::bandit::DEFAULT_DISCOUNT,
            buffer_capacity: 400_000,
            q_representation: QRepresentation::Tabular,
            behavior_temperature: BehaviorTemperature::Unit,
            bandit_reward: BanditReward::Undiscounted,
            normalize_bandit_reward: false,
            sparsity_regularization: true,
            fixed_prior: None,
            bootstrap_on_truncation: true,
            greedy_eval: false,
            evaluation: EvaluationConfig::default(),
        }
    }
}

impl AgentConfig {
    pub fn delta_for(&self, num_actions: usize) -> f64 {
        self.delta.unwrap_or(1.0 / (8.0 * num_actions as f64))
    }

    pub fn validate(&self, num_actions: usize) -> Result<()> {
        let positive = [
            ("lambda", self.lambda),
            ("learn_rate", self.learn_rate),
            ("polyak", self.polyak),
            ("bandit_c", self.bandit_c),
            ("bandit_discount", self.bandit_discount),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.polyak > 1.0 {
            return Err(Error::Config(format!("polyak must lie in (0, 1], got {}", self.polyak)));
        }
        if self.bandit_discount > 1.0 {
            return Err(Error::Config("bandit_discount must lie in (0, 1]".into()));
        }
        if self.sparsity_eval_episodes == 0 || self.batch_size == 0 || self.buffer_capacity == 0 {
            return Err(Error::Config("episode, batch and buffer sizes must be positive".into()));
        }
        if self.batch_size > self.buffer_capacity {
            return Err(Error::Config("batch_size cannot exceed buffer_capacity".into()));
        }
        if num_actions < 2 {
            return Err(Error::Config("training needs at least two actions".into()));
        }
        let delta = self.delta_for(num_actions);
        if !(delta > 0.0 && delta < 1.0 / num_actions as f64) {
            return Err(Error::Config(format!("delta must lie in (0, 1/|A|), got {delta}")));
        }
        if let Some(p) = &self.fixed_prior {
            if p.len() != num_actions {
                return Err(Error::Config("fixed_prior has the wrong length".into()));
            }
            SparsityDistribution::new(p.clone())?;
        }
        Ok(())
    }
}

/// Behavior prior that down-weights one action to `δ`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintPrior {
    probs: Vec<f64>,
    constrained_action: usize,
    delta: f64,
}

impl ConstraintPrior {
    pub fn new(num_actions: usize, constrained_action: usize, delta: f64) -> Result<Self> {
        if num_actions < 2 {
            return Err(Error::Contract("a constraint prior needs at least two actions".into()));
        }
        if constrained_action >= num_actions {
            return Err(Error::Contract(format!("action {constrained_action} out of range")));
        }
        if !(delta > 0.0 && delta < 1.0 / num_actions as f64) {
            return Err(Error::Contract(format!("delta must lie in (0, 1/|A|), got {delta}")));
        }
        let rest = (1.0 - delta) / (num_actions - 1) as f64;
        let mut probs = vec![rest; num_actions];
        probs[constrained_action] = delta;
        Ok(Self {
            probs,
            constrained_action,
            delta,
        })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn constrained_action(&self) -> usize {
        self.constrained_action
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }
}

/// `π̃(a|s) ∝ d(a) exp(Q(s, a) / temperature)`.
pub fn behavior_policy(q_row: &[f64], prior: &ConstraintPrior, temperature: f64) -> Vec<f64> {
    weighted_softmax(q_row, prior.probs(), temperature)
}

/// `p̃(a) ∝ exp(−μ(a))`.
pub fn sparsity_distribution(mu: &[f64]) -> Result<SparsityDistribution> {
    if mu.iter().any(|m| !m.is_finite()) {
        return Err(Error::Contract("every arm must be pulled before building p̃".into()));
    }
    let neg: Vec<f64> = mu.iter().map(|m| -m).collect();
    let mut probs = weighted_softmax(&neg, &vec![1.0; mu.len()], 1.0);
    // exp underflows once means differ by more than ~745
    if probs.iter().any(|p| *p < f64::MIN_POSITIVE) {
        probs.iter_mut().for_each(|p| *p = p.max(1e-300));
        let total: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p /= total);
    }
    SparsityDistribution::new(probs)
}

/// [`sparsity_distribution`] of a bandit's means.
pub fn sparsity_from_bandit(bandit: &DUcbState) -> Result<SparsityDistribution> {
    let mu = bandit
        .means()
        .into_iter()
        .map(|m| m.ok_or_else(|| Error::Contract("bandit initialization round is incomplete".into())))
        .collect::<Result<Vec<f64>>>()?;
    sparsity_distribution(&mu)
}

/// Soft bootstrap targets `r + γ λ log E_{p̃}[exp(Q_θ̄(s', ·)/λ)]`.
pub fn td_target(
    batch: &[Transition],
    q_target: &QModel,
    prior: &SparsityDistribution,
    lambda: f64,
    gamma: f64,
) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(Error::Contract("empty batch".into()));
    }
    if !(lambda > 0.0) {
        return Err(Error::Contract(format!("lambda must be > 0, got {lambda}")));
    }
    let mut out = Vec::with_capacity(batch.len());
    compute_targets(batch, q_target, TargetRule::Soft { lambda }, prior, gamma, &mut out);
    Ok(out)
}

/// Plain max targets `r + γ max_a Q_θ̄(s', a)`.
pub fn max_target(batch: &[Transition], q_target: &QModel, gamma: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(batch.len());
    let prior = SparsityDistribution::uniform(q_target.num_actions());
    compute_targets(batch, q_target, TargetRule::Max, &prior, gamma, &mut out);
    out
}

/// One descent step of the online parameters on the empirical risk.
pub fn q_update(q: &mut QParams, batch: &[Transition], targets: &[f64], learn_rate: f64) -> Result<()> {
    if batch.len() != targets.len() {
        return Err(Error::Shape {
            expected: format!("{} targets", batch.len()),
            got: targets.len().to_string(),
        });
    }
    if batch.is_empty() {
        return Ok(());
    }
    learner::apply_update(&mut q.online, batch, targets, learn_rate);
    Ok(())
}

/// `θ̄ ← η θ + (1 − η) θ̄`.
pub fn polyak_update(q: &mut QParams, rate: f64) -> Result<()> {
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(Error::Contract(format!("polyak rate must lie in (0, 1], got {rate}")));
    }
    learner::apply_polyak(&q.online, &mut q.target, rate);
    Ok(())
}

/// `π(a|s) ∝ p̃(a) exp(Q_θ(s, a)/λ)` over every state.
pub fn extract_policy(q: &QParams, prior: &SparsityDistribution, lambda: f64) -> Result<StochasticPolicy> {
    extract_regularized_policy(&q.online.to_table(), prior, lambda)
}

struct AsreExplorer {
    bandit: DUcbState,
    normalizer: Option<RewardNormalizer>,
    round_len: usize,
    delta: f64,
    temperature: f64,
    reward_kind: BanditReward,
    fixed: bool,
    prior: SparsityDistribution,
    constraint: Option<ConstraintPrior>,
    round_returns: Vec<f64>,
    probs: Vec<f64>,
}

impl Explorer for AsreExplorer {
    fn begin_episode(&mut self) {
        if self.round_returns.is_empty() {
            let arm = self.bandit.select_arm();
            self.constraint = Some(
                ConstraintPrior::new(self.bandit.num_arms(), arm, self.delta).expect("validated configuration"),
            );
        }
    }

    fn act(&mut self, q_row: &[f64], _step: u64, rng: &mut dyn RngCore) -> usize {
        let constraint = self.constraint.as_ref().expect("begin_episode selects a constraint");
        self.probs = behavior_policy(q_row, constraint, self.temperature);
        crate::mdp::sample_index(&self.probs, rng)
    }

    fn end_episode(&mut self, undiscounted: f64, discounted: f64) -> Result<()> {
        self.round_returns.push(match self.reward_kind {
            BanditReward::Undiscounted => undiscounted,
            BanditReward::Discounted => discounted,
        });
        if self.round_returns.len() < self.round_len {
            return Ok(());
        }
        let mean = self.round_returns.iter().sum::<f64>() / self.round_returns.len() as f64;
        self.round_returns.clear();
        let reward = match &mut self.normalizer {
            Some(n) => n.normalize(mean),
            None => mean,
        };
        let arm = self.constraint.as_ref().map_or(0, |c| c.constrained_action());
        self.bandit.update(arm, reward)?;
        if !self.fixed && self.bandit.initialized() {
            self.prior = sparsity_from_bandit(&self.bandit)?;
        }
        Ok(())
    }

    fn prior(&self) -> &SparsityDistribution {
        &self.prior
    }

    fn bandit_means(&self) -> Vec<f64> {
        self.bandit.means().into_iter().map(|m| m.unwrap_or(0.0)).collect()
    }
}

/// Result of [`train`].
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: QParams,
    pub prior: SparsityDistribution,
    pub record: RunRecord,
}

impl TrainOutcome {
    /// The policy the agent would deploy: `π ∝ p̃ exp(Q/λ)`, or greedy when
    /// regularization is disabled.
    pub fn policy(&self, config: &AgentConfig) -> Result<StochasticPolicy> {
        let rule = eval_rule(config);
        learner::evaluation_policy(&self.params.online, rule, &self.prior)
    }
}

fn eval_rule(config: &AgentConfig) -> EvalRule {
    if config.greedy_eval || !config.sparsity_regularization {
        EvalRule::Greedy
    } else {
        EvalRule::Soft { lambda: config.lambda }
    }
}

/// Runs the full training loop for `total_steps` environment steps.
pub fn train(mdp: &SparseActionMdp, config: &AgentConfig, total_steps: u64, seed: u64) -> Result<TrainOutcome> {
    let na = mdp.num_actions();
    config.validate(na)?;
    let prior = match &config.fixed_prior {
        Some(p) => SparsityDistribution::new(p.clone())?,
        None => SparsityDistribution::uniform(na),
    };
    let mut explorer = AsreExplorer {
        bandit: DUcbState::new(na, config.bandit_discount, config.bandit_c)?,
        normalizer: config.normalize_bandit_reward.then(RewardNormalizer::default),
        round_len: config.sparsity_eval_episodes,
        delta: config.delta_for(na),
        temperature: match config.behavior_temperature {
            BehaviorTemperature::Unit => 1.0,
            BehaviorTemperature::Lambda => config.lambda,
        },
        reward_kind: config.bandit_reward,
        fixed: config.fixed_prior.is_some(),
        prior,
        constraint: None,
        round_returns: Vec::with_capacity(config.sparsity_eval_episodes),
        probs: Vec::with_capacity(na),
    };
    let settings = LearnerSettings {
        representation: config.q_representation,
        batch_size: config.batch_size,
        learn_rate: config.learn_rate,
        polyak: config.polyak,
        buffer_capacity: config.buffer_capacity,
        bootstrap_on_truncation: config.bootstrap_on_truncation,
        target: if config.sparsity_regularization {
            TargetRule::Soft { lambda: config.lambda }
        } else {
            TargetRule::Max
        },
        eval: eval_rule(config),
        evaluation: config.evaluation.clone(),
        penalty: None,
        initial_q: None,
    };
    let (params, record) = run_learner(mdp, &settings, &mut explorer, total_steps, seed)?;
    Ok(TrainOutcome {
        params,
        prior: explorer.prior,
        record,
    })
}

#[cfg(test)]
mod tests;
