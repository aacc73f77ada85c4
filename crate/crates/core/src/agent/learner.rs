//! Off-policy replay learner shared by the sparsity-regularized agent and the
//! baselines. What differs between agents is how actions are explored, how
//! bootstrap targets are formed and which policy is evaluated.

use std::time::Instant;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::qparams::{QModel, QParams, QRepresentation};
use super::replay::ReplayBuffer;
use crate::error::{Error, Result};
use crate::mdp::{sample_index, BudgetTracker, SparseActionMdp, StochasticPolicy, Transition};
use crate::record::{mean_std, EpisodeRow, EvalRow, RunRecord};
use crate::rng::substream;
use crate::soft_bellman::{extract_regularized_policy, greedy_policy, weighted_log_sum_exp, QFunction, SparsityDistribution};

/// Periodic evaluation of the learned policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    /// Environment steps between checkpoints.
    pub interval: u64,
    /// Episodes rolled out per checkpoint.
    pub episodes: usize,
    /// Fill the `walltime_ms` column. Off by default so that CSVs are
    /// byte-reproducible.
    pub record_walltime: bool,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            interval: 5000,
            episodes: 20,
            record_walltime: false,
        }
    }
}

/// How bootstrap targets summarize `Q_θ̄(s', ·)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum TargetRule {
    /// `λ log E_{p̃}[exp(Q/λ)]` under the explorer's current prior.
    Soft { lambda: f64 },
    /// `max_a Q`.
    Max,
}

/// Which policy the checkpoints roll out.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum EvalRule {
    /// `π ∝ p̃ exp(Q/λ)` under the explorer's current prior.
    Soft { lambda: f64 },
    Greedy,
}

/// Action selection during training.
pub(crate) trait Explorer {
    fn begin_episode(&mut self) {}

    fn act(&mut self, q_row: &[f64], step: u64, rng: &mut dyn RngCore) -> usize;

    fn end_episode(&mut self, _undiscounted: f64, _discounted: f64) -> Result<()> {
        Ok(())
    }

    /// Sparsity distribution used by soft targets and soft evaluation.
    fn prior(&self) -> &SparsityDistribution;

    /// Bandit means for the record; zeros for agents without a bandit.
    fn bandit_means(&self) -> Vec<f64>;
}

pub(crate) struct LearnerSettings {
    pub representation: QRepresentation,
    pub batch_size: usize,
    pub learn_rate: f64,
    pub polyak: f64,
    pub buffer_capacity: usize,
    pub bootstrap_on_truncation: bool,
    pub target: TargetRule,
    pub eval: EvalRule,
    pub evaluation: EvaluationConfig,
    /// `(actions, penalty)`: learning reward is `r − penalty` whenever one of
    /// `actions` is executed. The recorded return is unaffected.
    pub penalty: Option<(Vec<usize>, f64)>,
    pub initial_q: Option<QFunction>,
}

/// Bootstrap targets `y_i = r_i + γ · V_θ̄(s'_i)`, with zero continuation for
/// terminal transitions.
pub(crate) fn compute_targets(
    batch: &[Transition],
    target: &QModel,
    rule: TargetRule,
    prior: &SparsityDistribution,
    gamma: f64,
    out: &mut Vec<f64>,
) {
    out.clear();
    let mut row = Vec::with_capacity(target.num_actions());
    for t in batch {
        let cont = if t.done || gamma == 0.0 {
            0.0
        } else {
            target.row_into(t.next_state, &mut row);
            match rule {
                TargetRule::Soft { lambda } => weighted_log_sum_exp(&row, prior.probs(), lambda),
                TargetRule::Max => row.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            }
        };
        out.push(t.reward + gamma * cont);
    }
}

/// One descent step on `J(θ) = 1/(2m) Σ (Q(s_i, a_i) − y_i)²`.
///
/// Linear models take the plain gradient step `θ ← θ − η ∇J`. Tabular models
/// divide each entry's gradient by that entry's share of the batch, which
/// moves `Q(s, a)` by `η` times the mean error of its occurrences; with a
/// single occurrence this is the plain step.
pub(crate) fn apply_update(q: &mut QModel, batch: &[Transition], targets: &[f64], learn_rate: f64) {
    match q {
        QModel::Tabular(table) => {
            let na = table.num_actions();
            let mut errs: Vec<(usize, f64)> = batch
                .iter()
                .zip(targets)
                .map(|(t, y)| {
                    let idx = t.state * na + t.action;
                    (idx, table.values()[idx] - y)
                })
                .collect();
            errs.sort_unstable_by_key(|(idx, _)| *idx);
            let values = table.values_mut();
            for group in errs.chunk_by(|a, b| a.0 == b.0) {
                let mean = group.iter().map(|(_, e)| e).sum::<f64>() / group.len() as f64;
                values[group[0].0] -= learn_rate * mean;
            }
        }
        QModel::Linear(_) => {
            let grad = q.risk_gradient(batch, targets);
            for (p, g) in q.params_mut().iter_mut().zip(grad) {
                *p -= learn_rate * g;
            }
        }
    }
}

/// `θ̄ ← η θ + (1 − η) θ̄`.
pub(crate) fn apply_polyak(online: &QModel, target: &mut QModel, rate: f64) {
    for (t, o) in target.params_mut().iter_mut().zip(online.params()) {
        *t = rate * o + (1.0 - rate) * *t;
    }
}

pub(crate) fn evaluation_policy(q: &QModel, rule: EvalRule, prior: &SparsityDistribution) -> Result<StochasticPolicy> {
    let table = q.to_table();
    match rule {
        EvalRule::Greedy => Ok(greedy_policy(&table)),
        EvalRule::Soft { lambda } => extract_regularized_policy(&table, prior, lambda),
    }
}

fn evaluate(
    mdp: &SparseActionMdp,
    policy: &StochasticPolicy,
    episodes: usize,
    rng: &mut dyn RngCore,
) -> Result<(f64, f64)> {
    let returns = (0..episodes)
        .map(|_| mdp.run_episode(&mut &*policy, rng).map(|t| t.undiscounted_return))
        .collect::<Result<Vec<f64>>>()?;
    Ok(mean_std(&returns))
}

pub(crate) fn run<E: Explorer>(
    mdp: &SparseActionMdp,
    settings: &LearnerSettings,
    explorer: &mut E,
    total_steps: u64,
    seed: u64,
) -> Result<(QParams, RunRecord)> {
    if total_steps == 0 {
        return Err(Error::Contract("total_steps must be positive".into()));
    }
    if mdp.horizon() == 0 {
        return Err(Error::Contract("cannot train with a zero horizon".into()));
    }
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    let gamma = mdp.discount();
    let started = Instant::now();
    let mut rng = substream(seed, 0);
    let mut eval_rng = substream(seed, 1);

    let mut params = match &settings.initial_q {
        Some(q) => {
            if settings.representation != QRepresentation::Tabular {
                return Err(Error::Contract("initial Q tables require the tabular representation".into()));
            }
            QParams::from_table(q.clone())
        }
        None => QParams::new(settings.representation, ns, na),
    };
    let mut buffer = ReplayBuffer::new(settings.buffer_capacity);
    let mut record = RunRecord::new(na);
    let mut batch = Vec::with_capacity(settings.batch_size);
    let mut targets = Vec::with_capacity(settings.batch_size);
    let mut row = Vec::with_capacity(na);

    let mut steps: u64 = 0;
    let mut episode: u64 = 0;
    let mut checkpoint: u64 = 0;

    while steps < total_steps {
        explorer.begin_episode();
        let ptilde = explorer.prior().probs().to_vec();
        let mu = explorer.bandit_means();
        let mut tracker = BudgetTracker::new(mdp);
        let mut requested = vec![0u64; na];
        let mut executed = vec![0u64; na];
        let mut ret = 0.0;
        let mut discounted = 0.0;
        let mut discount = 1.0;
        let mut s = mdp.sample_initial_state(&mut rng);
        let mut finished = true;

        for t in 0..mdp.horizon() {
            if mdp.is_terminal(s) {
                break;
            }
            params.online.row_into(s, &mut row);
            let a = explorer.act(&row, steps, &mut rng);
            let out = mdp.step(&mut tracker, s, a, &mut rng)?;
            requested[a] += 1;
            executed[out.executed_action] += 1;
            ret += out.reward;
            discounted += discount * out.reward;
            discount *= gamma;

            let terminal = mdp.is_terminal(out.next_state);
            let truncated = t + 1 == mdp.horizon() && !settings.bootstrap_on_truncation;
            let learn_reward = match &settings.penalty {
                Some((actions, p)) if actions.contains(&out.executed_action) => out.reward - p,
                _ => out.reward,
            };
            buffer.push(Transition {
                state: s,
                requested: a,
                action: out.executed_action,
                reward: learn_reward,
                next_state: out.next_state,
                done: terminal || truncated,
                step: t,
            });
            steps += 1;

            if buffer.len() >= settings.batch_size {
                buffer.sample_into(settings.batch_size, &mut rng, &mut batch);
                compute_targets(&batch, &params.target, settings.target, explorer.prior(), gamma, &mut targets);
                apply_update(&mut params.online, &batch, &targets, settings.learn_rate);
                apply_polyak(&params.online, &mut params.target, settings.polyak);
            }

            if settings.evaluation.interval > 0 && steps.is_multiple_of(settings.evaluation.interval) {
                let policy = evaluation_policy(&params.online, settings.eval, explorer.prior())?;
                let (mean, std) = evaluate(mdp, &policy, settings.evaluation.episodes, &mut eval_rng)?;
                record.evaluations.push(EvalRow {
                    checkpoint,
                    steps,
                    mean_return: mean,
                    std_return: std,
                });
                checkpoint += 1;
            }

            s = out.next_state;
            if terminal {
                break;
            }
            if steps >= total_steps && t + 1 < mdp.horizon() {
                finished = false;
                break;
            }
        }
        if !finished {
            break;
        }
        record.episodes.push(EpisodeRow {
            episode,
            steps,
            ret,
            requested,
            executed,
            ptilde,
            mu,
            walltime_ms: if settings.evaluation.record_walltime {
                started.elapsed().as_millis() as u64
            } else {
                0
            },
        });
        episode += 1;
        explorer.end_episode(ret, discounted)?;
    }
    Ok((params, record))
}

/// Draws from `π ∝ weights · exp(values / temperature)`.
pub(crate) fn sample_boltzmann(values: &[f64], weights: &[f64], temperature: f64, rng: &mut dyn RngCore) -> usize {
    let probs = crate::soft_bellman::weighted_softmax(values, weights, temperature);
    sample_index(&probs, rng)
}
