//! Reference agents sharing the replay learner with [`crate::agent`]:
//! ε-greedy Q-learning, soft Q-learning under a uniform prior, and ε-greedy
//! Q-learning with a reward penalty on known sparse actions.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::agent::{EvalRule, EvaluationConfig, Explorer, LearnerSettings, QParams, QRepresentation, TargetRule};
use crate::error::{Error, Result};
use crate::mdp::{argmax, SparseActionMdp};
use crate::record::RunRecord;
use crate::soft_bellman::{QFunction, SparsityDistribution};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Steps of linear decay; 10% of the training steps when unset.
    pub epsilon_decay_steps: Option<u64>,
    /// Temperature of soft Q-learning.
    pub entropy_coef: f64,
    /// Reward subtracted whenever a sparse action executes (prior-penalty agent).
    pub penalty: f64,
    pub batch_size: usize,
    pub learn_rate: f64,
    pub polyak: f64,
    pub buffer_capacity: usize,
    pub q_representation: QRepresentation,
    pub bootstrap_on_truncation: bool,
    pub evaluation: EvaluationConfig,
    /// Starting table for both online and target parameters.
    #[serde(skip)]
    pub initial_q: Option<QFunction>,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_steps: None,
            entropy_coef: 0.01,
            penalty: 0.1,
            batch_size: 256,
            learn_rate: 0.001,
            polyak: 0.005,
            buffer_capacity: 400_000,
            q_representation: QRepresentation::Tabular,
            bootstrap_on_truncation: true,
            evaluation: EvaluationConfig::default(),
            initial_q: None,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, e) in [("epsilon_start", self.epsilon_start), ("epsilon_end", self.epsilon_end)] {
            if !(0.0..=1.0).contains(&e) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {e}")));
            }
        }
        if !(self.penalty >= 0.0 && self.penalty.is_finite()) {
            return Err(Error::Config(format!("penalty must be >= 0, got {}", self.penalty)));
        }
        for (name, v) in [
            ("entropy_coef", self.entropy_coef),
            ("learn_rate", self.learn_rate),
            ("polyak", self.polyak),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.polyak > 1.0 {
            return Err(Error::Config("polyak must lie in (0, 1]".into()));
        }
        if self.batch_size == 0 || self.batch_size > self.buffer_capacity {
            return Err(Error::Config("batch_size must lie in [1, buffer_capacity]".into()));
        }
        Ok(())
    }

    /// Linear schedule from `epsilon_start` to `epsilon_end`.
    pub fn epsilon_at(&self, step: u64, total_steps: u64) -> f64 {
        let decay = self
            .epsilon_decay_steps
            .unwrap_or_else(|| (total_steps / 10).max(1));
        if step >= decay {
            return self.epsilon_end;
        }
        let frac = step as f64 / decay as f64;
        self.epsilon_start + frac * (self.epsilon_end - self.epsilon_start)
    }

    fn settings(&self, target: TargetRule, eval: EvalRule, penalty: Option<(Vec<usize>, f64)>) -> LearnerSettings {
        LearnerSettings {
            representation: self.q_representation,
            batch_size: self.batch_size,
            learn_rate: self.learn_rate,
            polyak: self.polyak,
            buffer_capacity: self.buffer_capacity,
            bootstrap_on_truncation: self.bootstrap_on_truncation,
            target,
            eval,
            evaluation: self.evaluation.clone(),
            penalty,
            initial_q: self.initial_q.clone(),
        }
    }
}

struct EpsilonGreedy<'a> {
    config: &'a BaselineConfig,
    total_steps: u64,
    prior: SparsityDistribution,
}

impl Explorer for EpsilonGreedy<'_> {
    fn act(&mut self, q_row: &[f64], step: u64, rng: &mut dyn RngCore) -> usize {
        let eps = self.config.epsilon_at(step, self.total_steps);
        if eps > 0.0 && rng.random::<f64>() < eps {
            rng.random_range(0..q_row.len())
        } else {
            argmax(q_row)
        }
    }

    fn prior(&self) -> &SparsityDistribution {
        &self.prior
    }

    fn bandit_means(&self) -> Vec<f64> {
        vec![0.0; self.prior.len()]
    }
}

struct Boltzmann {
    temperature: f64,
    prior: SparsityDistribution,
}

impl Explorer for Boltzmann {
    fn act(&mut self, q_row: &[f64], _step: u64, rng: &mut dyn RngCore) -> usize {
        crate::agent::sample_boltzmann(q_row, self.prior.probs(), self.temperature, rng)
    }

    fn prior(&self) -> &SparsityDistribution {
        &self.prior
    }

    fn bandit_means(&self) -> Vec<f64> {
        vec![0.0; self.prior.len()]
    }
}

fn check_run(mdp: &SparseActionMdp, config: &BaselineConfig) -> Result<()> {
    config.validate()?;
    if let Some(q) = &config.initial_q {
        if q.num_states() != mdp.num_states() || q.num_actions() != mdp.num_actions() {
            return Err(Error::Shape {
                expected: format!("{}x{} initial Q", mdp.num_states(), mdp.num_actions()),
                got: format!("{}x{}", q.num_states(), q.num_actions()),
            });
        }
    }
    Ok(())
}

/// TD(0) Q-learning with replay, Polyak targets and ε-greedy exploration.
/// Checkpoints evaluate the greedy policy.
pub fn egreedy_q_train(
    mdp: &SparseActionMdp,
    config: &BaselineConfig,
    total_steps: u64,
    seed: u64,
) -> Result<(QParams, RunRecord)> {
    check_run(mdp, config)?;
    let mut explorer = EpsilonGreedy {
        config,
        total_steps,
        prior: SparsityDistribution::uniform(mdp.num_actions()),
    };
    let settings = config.settings(TargetRule::Max, EvalRule::Greedy, None);
    crate::agent::run_learner(mdp, &settings, &mut explorer, total_steps, seed)
}

/// Soft Q-learning with a frozen uniform prior at temperature
/// `entropy_coef`, acting and evaluating with the matching Boltzmann policy.
pub fn softq_train(
    mdp: &SparseActionMdp,
    config: &BaselineConfig,
    total_steps: u64,
    seed: u64,
) -> Result<(QParams, RunRecord)> {
    check_run(mdp, config)?;
    let lambda = config.entropy_coef;
    let mut explorer = Boltzmann {
        temperature: lambda,
        prior: SparsityDistribution::uniform(mdp.num_actions()),
    };
    let settings = config.settings(TargetRule::Soft { lambda }, EvalRule::Soft { lambda }, None);
    crate::agent::run_learner(mdp, &settings, &mut explorer, total_steps, seed)
}

/// ε-greedy Q-learning that learns from `r − penalty` whenever an action in
/// `sparse_actions` executes. Recorded returns are the unpenalized ones.
pub fn prior_penalty_train(
    mdp: &SparseActionMdp,
    config: &BaselineConfig,
    sparse_actions: &[usize],
    total_steps: u64,
    seed: u64,
) -> Result<(QParams, RunRecord)> {
    check_run(mdp, config)?;
    if sparse_actions.is_empty() {
        return Err(Error::Contract("the prior-penalty agent needs at least one sparse action".into()));
    }
    if let Some(&a) = sparse_actions.iter().find(|&&a| a >= mdp.num_actions()) {
        return Err(Error::Contract(format!("sparse action {a} out of range")));
    }
    let mut explorer = EpsilonGreedy {
        config,
        total_steps,
        prior: SparsityDistribution::uniform(mdp.num_actions()),
    };
    let penalty = Some((sparse_actions.to_vec(), config.penalty));
    let settings = config.settings(TargetRule::Max, EvalRule::Greedy, penalty);
    crate::agent::run_learner(mdp, &settings, &mut explorer, total_steps, seed)
}
