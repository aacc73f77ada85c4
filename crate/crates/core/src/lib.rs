//! Sparse-action Markov decision processes and sparsity-regularized
//! Q-learning.
//!
//! The crate is organized bottom-up:
//!
//! * [`mdp`]: tabular MDPs with per-episode action budgets, budget-aware
//!   rollouts and exact policy evaluation.
//! * [`soft_bellman`]: the KL-to-prior regularized Bellman operator, value
//!   iteration and policy extraction.
//! * [`bandit`]: discounted UCB used to rank actions by sparsity.
//! * [`agent`]: the full training loop.
//! * [`baselines`]: ε-greedy, soft-Q and prior-penalty reference agents.
//! * [`envs`]: synthetic shooter, market and trigger-chain environments.
//! * [`harness`]: experiment configs, multi-seed runs, CSV and SVG output.

pub mod agent;
pub mod bandit;
pub mod baselines;
pub mod envs;
pub mod error;
pub mod harness;
pub mod mdp;
pub mod random;
pub mod record;
pub mod rng;
pub mod soft_bellman;

pub use agent::{train, AgentConfig, ConstraintPrior, QParams, QRepresentation, TrainOutcome};
pub use bandit::DUcbState;
pub use baselines::BaselineConfig;
pub use envs::EnvSpec;
pub use harness::{AgentKind, ExperimentConfig};
pub use error::{Error, Result};
pub use mdp::{Budget, BudgetTracker, SparseActionMdp, StochasticPolicy, Trajectory, Transition};
pub use record::RunRecord;
pub use soft_bellman::{QFunction, SparsityDistribution};
