//! Tabular sparse-action MDPs.
//!
//! A [`SparseActionMdp`] is an ordinary finite discounted MDP plus a
//! per-episode execution cap for each action. Analytic routines (policy
//! evaluation, value iteration) work on the underlying discounted
//! infinite-horizon MDP and ignore the caps; sampling routines
//! ([`SparseActionMdp::step`], [`SparseActionMdp::run_episode`]) enforce them
//! through a [`BudgetTracker`] and truncate episodes at the horizon.
//!
//! When a policy requests an action whose budget is exhausted, the MDP's
//! designated no-op action is executed instead. Both the requested and the
//! executed action are recorded on the resulting [`Transition`].

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Row sums of stochastic vectors must match 1 to this tolerance.
pub const STOCHASTIC_TOL: f64 = 1e-9;

/// Above this many state-action pairs, policy evaluation iterates instead of
/// solving the linear system directly.
pub const DIRECT_SOLVE_LIMIT: usize = 10_000;

/// Per-episode execution cap for one action.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Budget {
    Unlimited,
    Limited(u32),
}

impl Budget {
    pub fn is_limited(self) -> bool {
        matches!(self, Budget::Limited(_))
    }
}

impl Serialize for Budget {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Budget::Unlimited => serializer.serialize_str("unlimited"),
            Budget::Limited(k) => serializer.serialize_u32(*k),
        }
    }
}

impl<'de> Deserialize<'de> for Budget {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Count(u32),
            Word(String),
        }
        match Repr::deserialize(deserializer)? {
            Repr::Count(k) => Ok(Budget::Limited(k)),
            Repr::Word(w) if w == "unlimited" => Ok(Budget::Unlimited),
            Repr::Word(w) => Err(serde::de::Error::custom(format!(
                "budget must be a non-negative integer or \"unlimited\", got {w:?}"
            ))),
        }
    }
}

/// Finite discounted MDP with per-action episode budgets.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseActionMdp {
    num_states: usize,
    num_actions: usize,
    /// Flattened `[s][a][s']`.
    transition: Vec<f64>,
    /// Flattened `[s][a]`.
    reward: Vec<f64>,
    discount: f64,
    initial_dist: Vec<f64>,
    budgets: Vec<Budget>,
    horizon: usize,
    noop_action: usize,
    terminal: Vec<bool>,
    /// Flattened `[s][a]`: the action does nothing in this state and runs as
    /// the no-op without touching its budget.
    inert: Vec<bool>,
}

/// Plain-data form of a [`SparseActionMdp`], used for (de)serialization and
/// for constructing instances by hand.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MdpDescription {
    pub num_states: usize,
    pub num_actions: usize,
    /// `transition[s][a][s']`.
    pub transition: Vec<Vec<Vec<f64>>>,
    /// `reward[s][a]`.
    pub reward: Vec<Vec<f64>>,
    pub discount: f64,
    pub initial_dist: Vec<f64>,
    pub budgets: Vec<Budget>,
    pub horizon: usize,
    pub noop_action: usize,
    /// Absorbing zero-reward states at which sampled episodes stop.
    #[serde(default)]
    pub terminal: Vec<usize>,
    /// `[s, a]` pairs that behave exactly like the no-op in state `s`.
    #[serde(default)]
    pub inert: Vec<[usize; 2]>,
}

impl SparseActionMdp {
    /// Builds and validates an MDP from flat row-major tensors.
    ///
    /// `transition` is indexed `[s][a][s']` and `reward` `[s][a]`. All
    /// actions start with an unlimited budget, the horizon is 100 and
    /// action 0 is the no-op; see the `with_*` methods.
    pub fn new(
        num_states: usize,
        num_actions: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
        discount: f64,
        initial_dist: Vec<f64>,
    ) -> Result<Self> {
        let mdp = Self {
            num_states,
            num_actions,
            transition,
            reward,
            discount,
            initial_dist,
            budgets: vec![Budget::Unlimited; num_actions],
            horizon: 100,
            noop_action: 0,
            terminal: vec![false; num_states],
            inert: vec![false; num_states * num_actions],
        };
        mdp.validate()?;
        Ok(mdp)
    }

    pub fn with_budgets(mut self, budgets: Vec<Budget>) -> Result<Self> {
        self.budgets = budgets;
        self.validate()?;
        Ok(self)
    }

    pub fn with_horizon(mut self, horizon: usize) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn with_noop_action(mut self, noop: usize) -> Result<Self> {
        self.noop_action = noop;
        self.validate()?;
        Ok(self)
    }

    pub fn with_discount(mut self, discount: f64) -> Result<Self> {
        self.discount = discount;
        self.validate()?;
        Ok(self)
    }

    pub fn with_terminal_states(mut self, states: &[usize]) -> Result<Self> {
        self.terminal = vec![false; self.num_states];
        for &s in states {
            if s >= self.num_states {
                return Err(Error::InvalidModel(format!("terminal state {s} out of range")));
            }
            self.terminal[s] = true;
        }
        self.validate()?;
        Ok(self)
    }

    /// Same model with every reward passed through `f`.
    /// Marks `(s, a)` pairs whose dynamics and reward equal the no-op's as
    /// inert: selecting them executes the no-op and consumes no budget.
    pub fn with_inert_actions(mut self, pairs: &[(usize, usize)]) -> Result<Self> {
        self.inert = vec![false; self.num_states * self.num_actions];
        for &(s, a) in pairs {
            self.check_state(s)?;
            self.check_action(a)?;
            self.inert[s * self.num_actions + a] = true;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn map_rewards(&self, f: impl Fn(f64) -> f64) -> Self {
        let mut out = self.clone();
        out.reward.iter_mut().for_each(|r| *r = f(*r));
        out
    }

    /// Same dynamics with every budget lifted.
    pub fn without_budgets(&self) -> Self {
        let mut out = self.clone();
        out.budgets = vec![Budget::Unlimited; self.num_actions];
        out
    }

    fn validate(&self) -> Result<()> {
        let (ns, na) = (self.num_states, self.num_actions);
        if ns == 0 || na == 0 {
            return Err(Error::InvalidModel("state and action counts must be positive".into()));
        }
        if self.transition.len() != ns * na * ns {
            return Err(Error::Shape {
                expected: format!("{} transition entries", ns * na * ns),
                got: self.transition.len().to_string(),
            });
        }
        if self.reward.len() != ns * na {
            return Err(Error::Shape {
                expected: format!("{} reward entries", ns * na),
                got: self.reward.len().to_string(),
            });
        }
        if self.initial_dist.len() != ns {
            return Err(Error::Shape {
                expected: format!("{ns} initial probabilities"),
                got: self.initial_dist.len().to_string(),
            });
        }
        if self.budgets.len() != na {
            return Err(Error::Shape {
                expected: format!("{na} budgets"),
                got: self.budgets.len().to_string(),
            });
        }
        if !(0.0..1.0).contains(&self.discount) {
            return Err(Error::InvalidModel(format!(
                "discount must lie in [0, 1), got {}",
                self.discount
            )));
        }
        if self.reward.iter().any(|r| !r.is_finite()) {
            return Err(Error::NonFinite("reward".into()));
        }
        for s in 0..ns {
            for a in 0..na {
                let row = self.transition_row(s, a);
                if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                    return Err(Error::InvalidModel(format!("P[{s}][{a}] has a negative or non-finite entry")));
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > STOCHASTIC_TOL {
                    return Err(Error::InvalidModel(format!("P[{s}][{a}] sums to {sum}")));
                }
            }
        }
        check_distribution(&self.initial_dist, "initial distribution")?;
        if self.noop_action >= na {
            return Err(Error::InvalidModel(format!("no-op action {} out of range", self.noop_action)));
        }
        if self.budgets[self.noop_action].is_limited() {
            return Err(Error::InvalidModel("the no-op action cannot carry a budget".into()));
        }
        let noop = self.noop_action;
        for (idx, _) in self.inert.iter().enumerate().filter(|(_, &x)| x) {
            let (s, a) = (idx / na, idx % na);
            if self.reward(s, a) != self.reward(s, noop) || self.transition_row(s, a) != self.transition_row(s, noop) {
                return Err(Error::InvalidModel(format!(
                    "inert action {a} in state {s} must match the no-op's reward and dynamics"
                )));
            }
        }
        for s in (0..ns).filter(|&s| self.terminal[s]) {
            for a in 0..na {
                if self.reward(s, a) != 0.0 || self.transition_row(s, a)[s] != 1.0 {
                    return Err(Error::InvalidModel(format!(
                        "terminal state {s} must be absorbing with zero reward"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn noop_action(&self) -> usize {
        self.noop_action
    }

    pub fn budgets(&self) -> &[Budget] {
        &self.budgets
    }

    pub fn initial_dist(&self) -> &[f64] {
        &self.initial_dist
    }

    pub fn is_inert(&self, s: usize, a: usize) -> bool {
        self.inert[s * self.num_actions + a]
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal[s]
    }

    /// True when at least one action carries a finite budget.
    pub fn is_sparse_action(&self) -> bool {
        self.budgets.iter().any(|b| b.is_limited())
    }

    /// Actions with a finite budget.
    pub fn budgeted_actions(&self) -> Vec<usize> {
        (0..self.num_actions).filter(|&a| self.budgets[a].is_limited()).collect()
    }

    #[inline]
    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.num_actions + a]
    }

    /// `P(· | s, a)`.
    #[inline]
    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.num_actions + a) * self.num_states;
        &self.transition[start..start + self.num_states]
    }

    pub fn reward_table(&self) -> &[f64] {
        &self.reward
    }

    pub fn transition_table(&self) -> &[f64] {
        &self.transition
    }

    /// `Σ_{s'} P(s'|s,a) f(s')`.
    #[inline]
    pub fn expected_next(&self, s: usize, a: usize, f: &[f64]) -> f64 {
        self.transition_row(s, a)
            .iter()
            .zip(f)
            .filter(|(p, _)| **p != 0.0)
            .map(|(p, v)| p * v)
            .sum()
    }

    fn check_state(&self, s: usize) -> Result<()> {
        if s >= self.num_states {
            return Err(Error::Contract(format!("state {s} out of range (|S| = {})", self.num_states)));
        }
        Ok(())
    }

    fn check_action(&self, a: usize) -> Result<()> {
        if a >= self.num_actions {
            return Err(Error::Contract(format!("action {a} out of range (|A| = {})", self.num_actions)));
        }
        Ok(())
    }

    /// Draws `s0 ~ d0`.
    pub fn sample_initial_state(&self, rng: &mut dyn RngCore) -> usize {
        sample_index(&self.initial_dist, rng)
    }

    /// Executes one environment step under the budget rule.
    pub fn step(
        &self,
        tracker: &mut BudgetTracker,
        s: usize,
        a: usize,
        rng: &mut dyn RngCore,
    ) -> Result<StepOutcome> {
        self.check_state(s)?;
        self.check_action(a)?;
        if tracker.remaining.len() != self.num_actions {
            return Err(Error::Contract("budget tracker was built for a different MDP".into()));
        }
        let executed = if self.is_inert(s, a) || !tracker.try_consume(a) {
            self.noop_action
        } else {
            a
        };
        let next_state = sample_index(self.transition_row(s, executed), rng);
        Ok(StepOutcome {
            reward: self.reward(s, executed),
            next_state,
            executed_action: executed,
        })
    }

    /// Rolls out one episode from `s0 ~ d0` until the horizon or a terminal
    /// state.
    pub fn run_episode<P: ActionSampler + ?Sized>(
        &self,
        policy: &mut P,
        rng: &mut dyn RngCore,
    ) -> Result<Trajectory> {
        let mut tracker = BudgetTracker::new(self);
        let mut traj = Trajectory::default();
        if self.horizon == 0 {
            return Ok(traj);
        }
        let mut s = self.sample_initial_state(rng);
        let mut discount = 1.0;
        for t in 0..self.horizon {
            if self.terminal[s] {
                break;
            }
            let requested = policy.sample_action(s, rng);
            let out = self.step(&mut tracker, s, requested, rng)?;
            let done = self.terminal[out.next_state];
            traj.discounted_return += discount * out.reward;
            traj.undiscounted_return += out.reward;
            discount *= self.discount;
            traj.transitions.push(Transition {
                state: s,
                requested,
                action: out.executed_action,
                reward: out.reward,
                next_state: out.next_state,
                done,
                step: t,
            });
            s = out.next_state;
            if done {
                break;
            }
        }
        traj.truncated = !traj.transitions.last().is_some_and(|t| t.done);
        Ok(traj)
    }

    /// `V^π` of the underlying discounted MDP (budgets ignored).
    ///
    /// Solved directly by LU decomposition of `(I - γ P_π)` when the model is
    /// small enough, otherwise by fixed-point iteration to 1e-12.
    pub fn exact_policy_evaluation(&self, policy: &StochasticPolicy) -> Result<Vec<f64>> {
        self.check_policy_shape(policy)?;
        policy.validate()?;
        let reward_pi: Vec<f64> = (0..self.num_states)
            .map(|s| (0..self.num_actions).map(|a| policy.prob(s, a) * self.reward(s, a)).sum())
            .collect();
        self.evaluate_with_rewards(policy, &reward_pi)
    }

    /// Solves `V = r_π + γ P_π V` for an arbitrary per-state reward vector.
    pub(crate) fn evaluate_with_rewards(&self, policy: &StochasticPolicy, reward_pi: &[f64]) -> Result<Vec<f64>> {
        let ns = self.num_states;
        let gamma = self.discount;
        if ns * self.num_actions <= DIRECT_SOLVE_LIMIT {
            let mut m = DMatrix::<f64>::identity(ns, ns);
            for s in 0..ns {
                for a in 0..self.num_actions {
                    let pa = policy.prob(s, a);
                    if pa == 0.0 {
                        continue;
                    }
                    for (s2, p) in self.transition_row(s, a).iter().enumerate() {
                        m[(s, s2)] -= gamma * pa * p;
                    }
                }
            }
            let rhs = DVector::from_column_slice(reward_pi);
            let sol = m
                .lu()
                .solve(&rhs)
                .ok_or_else(|| Error::InvalidModel("singular policy evaluation system".into()))?;
            return Ok(sol.iter().copied().collect());
        }
        let mut v = vec![0.0; ns];
        for iter in 0..1_000_000 {
            let next: Vec<f64> = (0..ns)
                .map(|s| {
                    reward_pi[s]
                        + gamma
                            * (0..self.num_actions)
                                .map(|a| policy.prob(s, a) * self.expected_next(s, a, &v))
                                .sum::<f64>()
                })
                .collect();
            let residual = max_abs_diff(&next, &v);
            v = next;
            if residual <= 1e-12 {
                return Ok(v);
            }
            if iter == 999_999 {
                return Err(Error::NotConverged { iterations: iter + 1, residual });
            }
        }
        unreachable!()
    }

    /// `Q^π(s,a) = r(s,a) + γ E[V(s')]`.
    pub fn q_from_values(&self, v: &[f64]) -> Vec<f64> {
        let mut q = Vec::with_capacity(self.num_states * self.num_actions);
        for s in 0..self.num_states {
            for a in 0..self.num_actions {
                q.push(self.reward(s, a) + self.discount * self.expected_next(s, a, v));
            }
        }
        q
    }

    /// Optimal expected discounted return over exactly `steps` decisions,
    /// computed by backward induction on the underlying MDP.
    pub fn finite_horizon_optimal_values(&self, steps: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.num_states];
        for _ in 0..steps {
            v = (0..self.num_states)
                .map(|s| {
                    (0..self.num_actions)
                        .map(|a| self.reward(s, a) + self.discount * self.expected_next(s, a, &v))
                        .fold(f64::NEG_INFINITY, f64::max)
                })
                .collect();
        }
        v
    }

    pub(crate) fn check_policy_shape(&self, policy: &StochasticPolicy) -> Result<()> {
        if policy.num_states != self.num_states || policy.num_actions != self.num_actions {
            return Err(Error::Shape {
                expected: format!("{}x{} policy", self.num_states, self.num_actions),
                got: format!("{}x{}", policy.num_states, policy.num_actions),
            });
        }
        Ok(())
    }

    pub fn to_description(&self) -> MdpDescription {
        let (ns, na) = (self.num_states, self.num_actions);
        MdpDescription {
            num_states: ns,
            num_actions: na,
            transition: (0..ns)
                .map(|s| (0..na).map(|a| self.transition_row(s, a).to_vec()).collect())
                .collect(),
            reward: (0..ns).map(|s| self.reward[s * na..(s + 1) * na].to_vec()).collect(),
            discount: self.discount,
            initial_dist: self.initial_dist.clone(),
            budgets: self.budgets.clone(),
            horizon: self.horizon,
            noop_action: self.noop_action,
            terminal: (0..ns).filter(|&s| self.terminal[s]).collect(),
            inert: (0..ns * na).filter(|&i| self.inert[i]).map(|i| [i / na, i % na]).collect(),
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(&self.to_description()).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let desc: MdpDescription = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Self::try_from(desc)
    }
}

impl TryFrom<MdpDescription> for SparseActionMdp {
    type Error = Error;

    fn try_from(d: MdpDescription) -> Result<Self> {
        let (ns, na) = (d.num_states, d.num_actions);
        if d.transition.len() != ns || d.transition.iter().any(|r| r.len() != na || r.iter().any(|p| p.len() != ns)) {
            return Err(Error::Shape {
                expected: format!("transition[{ns}][{na}][{ns}]"),
                got: "ragged or mis-sized transition tensor".into(),
            });
        }
        if d.reward.len() != ns || d.reward.iter().any(|r| r.len() != na) {
            return Err(Error::Shape {
                expected: format!("reward[{ns}][{na}]"),
                got: "ragged or mis-sized reward matrix".into(),
            });
        }
        let transition = d.transition.into_iter().flatten().flatten().collect();
        let reward = d.reward.into_iter().flatten().collect();
        let mdp = SparseActionMdp::new(ns, na, transition, reward, d.discount, d.initial_dist)?
            .with_noop_action(d.noop_action)?
            .with_budgets(d.budgets)?
            .with_terminal_states(&d.terminal)?
            .with_inert_actions(&d.inert.iter().map(|&[s, a]| (s, a)).collect::<Vec<_>>())?
            .with_horizon(d.horizon);
        Ok(mdp)
    }
}

/// Result of a single [`SparseActionMdp::step`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub next_state: usize,
    pub executed_action: usize,
}

/// Remaining per-episode executions for each action.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BudgetTracker {
    /// `None` marks an unlimited action.
    remaining: Vec<Option<u32>>,
}

impl BudgetTracker {
    pub fn new(mdp: &SparseActionMdp) -> Self {
        Self {
            remaining: mdp
                .budgets
                .iter()
                .map(|b| match b {
                    Budget::Unlimited => None,
                    Budget::Limited(k) => Some(*k),
                })
                .collect(),
        }
    }

    pub fn remaining(&self, a: usize) -> Option<u32> {
        self.remaining[a]
    }

    pub fn can_execute(&self, a: usize) -> bool {
        self.remaining[a] != Some(0)
    }

    /// Consumes one execution of `a` if any remain.
    pub fn try_consume(&mut self, a: usize) -> bool {
        match &mut self.remaining[a] {
            None => true,
            Some(0) => false,
            Some(k) => {
                *k -= 1;
                true
            }
        }
    }
}

/// One environment interaction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transition {
    pub state: usize,
    /// Action the policy asked for.
    pub requested: usize,
    /// Action actually executed (the no-op when `requested` was exhausted).
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
    /// `next_state` is terminal; the continuation value is zero.
    pub done: bool,
    pub step: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory {
    pub transitions: Vec<Transition>,
    pub discounted_return: f64,
    pub undiscounted_return: f64,
    /// Ended by the horizon rather than a terminal state.
    pub truncated: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn executed_counts(&self, num_actions: usize) -> Vec<u64> {
        let mut c = vec![0; num_actions];
        for t in &self.transitions {
            c[t.action] += 1;
        }
        c
    }

    pub fn requested_counts(&self, num_actions: usize) -> Vec<u64> {
        let mut c = vec![0; num_actions];
        for t in &self.transitions {
            c[t.requested] += 1;
        }
        c
    }

    /// Whether the executed actions respect every finite budget of `mdp`.
    pub fn respects_budgets(&self, mdp: &SparseActionMdp) -> bool {
        self.executed_counts(mdp.num_actions())
            .iter()
            .zip(mdp.budgets())
            .all(|(&n, b)| match b {
                Budget::Unlimited => true,
                Budget::Limited(k) => n <= u64::from(*k),
            })
    }
}

/// Anything that can pick an action in a state.
pub trait ActionSampler {
    fn sample_action(&mut self, state: usize, rng: &mut dyn RngCore) -> usize;
}

impl<F> ActionSampler for F
where
    F: FnMut(usize, &mut dyn RngCore) -> usize,
{
    fn sample_action(&mut self, state: usize, rng: &mut dyn RngCore) -> usize {
        self(state, rng)
    }
}

/// Row-stochastic `π(a|s)` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct StochasticPolicy {
    num_states: usize,
    num_actions: usize,
    probs: Vec<f64>,
}

impl StochasticPolicy {
    pub fn new(num_states: usize, num_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != num_states * num_actions {
            return Err(Error::Shape {
                expected: format!("{} probabilities", num_states * num_actions),
                got: probs.len().to_string(),
            });
        }
        let p = Self { num_states, num_actions, probs };
        p.validate()?;
        Ok(p)
    }

    /// Same distribution in every state.
    pub fn state_independent(num_states: usize, dist: &[f64]) -> Result<Self> {
        let probs = (0..num_states).flat_map(|_| dist.iter().copied()).collect();
        Self::new(num_states, dist.len(), probs)
    }

    /// Puts all mass on `actions[s]`.
    pub fn deterministic(num_actions: usize, actions: &[usize]) -> Result<Self> {
        let mut probs = vec![0.0; actions.len() * num_actions];
        for (s, &a) in actions.iter().enumerate() {
            if a >= num_actions {
                return Err(Error::Contract(format!("action {a} out of range")));
            }
            probs[s * num_actions + a] = 1.0;
        }
        Self::new(actions.len(), num_actions, probs)
    }

    pub fn validate(&self) -> Result<()> {
        for s in 0..self.num_states {
            check_distribution(self.row(s), &format!("policy row {s}"))?;
        }
        Ok(())
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    #[inline]
    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.num_actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.num_actions..(s + 1) * self.num_actions]
    }

    /// Most likely action, lowest index on ties.
    pub fn mode(&self, s: usize) -> usize {
        argmax(self.row(s))
    }
}

impl ActionSampler for StochasticPolicy {
    fn sample_action(&mut self, state: usize, rng: &mut dyn RngCore) -> usize {
        sample_index(self.row(state), rng)
    }
}

impl ActionSampler for &StochasticPolicy {
    fn sample_action(&mut self, state: usize, rng: &mut dyn RngCore) -> usize {
        sample_index(self.row(state), rng)
    }
}

/// Inverse-CDF draw from a (possibly slightly unnormalized) distribution.
pub fn sample_index(probs: &[f64], rng: &mut dyn RngCore) -> usize {
    let total: f64 = probs.iter().sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last_positive = i;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

/// Index of the maximum, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub(crate) fn check_distribution(p: &[f64], what: &str) -> Result<()> {
    if p.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::InvalidModel(format!("{what} has a negative or non-finite entry")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > STOCHASTIC_TOL {
        return Err(Error::InvalidModel(format!("{what} sums to {sum}")));
    }
    Ok(())
}
