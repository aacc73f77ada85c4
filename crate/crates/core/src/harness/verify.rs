//! Self-check suite behind `asre verify`: operator properties, exact-solver
//! oracles, bandit behavior, learning sanity, directional comparisons on the
//! benchmark environments, determinism and budget safety.

use std::time::{Duration, Instant};

use rand::{Rng, RngCore};

use super::{run_seeds, AgentKind, ExperimentConfig};
use crate::agent::{train, AgentConfig, EvaluationConfig};
use crate::bandit::DUcbState;
use crate::envs::{ChainConfig, EnvSpec};
use crate::error::Result;
use crate::mdp::{Budget, SparseActionMdp, StochasticPolicy};
use crate::random::{random_distribution, random_mdp, random_prior, random_q};
use crate::record::mean_std;
use crate::rng::seeded;
use crate::soft_bellman::{
    extract_regularized_policy, regularized_bellman_apply, regularized_value_iteration, soft_value,
    standard_value_iteration, QFunction, SparsityDistribution,
};

/// Steps per seed in the directional comparisons.
pub const BENCHMARK_STEPS: u64 = 30_000;
/// Seeds of the directional comparisons.
pub const BENCHMARK_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
/// λ grid of the sweep.
pub const LAMBDA_GRID: [f64; 4] = [0.005, 0.01, 0.05, 0.2];

#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

/// Which checks to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scope {
    /// Everything but the multi-minute training comparisons.
    Quick,
    Full,
}

/// Experiment used for the directional comparisons: 20 evaluation
/// checkpoints of 20 episodes each, scored on the last 5.
pub fn benchmark_config(env: EnvSpec, agent: AgentKind, output_dir: impl Into<std::path::PathBuf>) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(env, agent, BENCHMARK_STEPS, BENCHMARK_SEEDS.to_vec(), output_dir);
    c.evaluation = Some(EvaluationConfig {
        interval: BENCHMARK_STEPS / 20,
        episodes: 20,
        record_walltime: false,
    });
    c
}

type Check = fn() -> Result<(bool, String)>;

pub fn checks(scope: Scope) -> Vec<(&'static str, Check)> {
    let mut all: Vec<(&'static str, Check, bool)> = vec![
        ("operator contraction", contraction, false),
        ("operator monotonicity", monotonicity, false),
        ("fixed point and suboptimality bound", fixed_point_bound, false),
        ("soft-value sandwich", sandwich, false),
        ("oracle equivalence", oracle_equivalence, false),
        ("discounted UCB tracking", ducb_tracking, false),
        ("tabular learning sanity", tabular_learning, true),
        ("shooter and market versus epsilon-greedy", directional, true),
        ("sparsity regularization ablation", ablation, true),
        ("lambda sweep ordering", lambda_ordering, true),
        ("determinism", determinism, false),
        ("budget safety", budget_safety, false),
    ];
    if scope == Scope::Quick {
        all.retain(|c| !c.2);
    }
    all.into_iter().map(|(n, f, _)| (n, f)).collect()
}

/// Runs the checks of `scope` in order. An error inside a check counts as a
/// failure.
pub fn run_checks(scope: Scope) -> Vec<CheckResult> {
    checks(scope)
        .into_iter()
        .map(|(name, check)| {
            let started = Instant::now();
            let (passed, detail) = check().unwrap_or_else(|e| (false, format!("error: {e}")));
            CheckResult {
                name,
                passed,
                detail,
                elapsed: started.elapsed(),
            }
        })
        .collect()
}

const GAMMAS: [f64; 3] = [0.5, 0.9, 0.99];

fn small_instance(rng: &mut dyn RngCore, i: usize) -> (SparseActionMdp, SparsityDistribution, f64) {
    let ns = rng.random_range(1..=5);
    let na = rng.random_range(1..=4);
    let mdp = random_mdp(rng, ns, na, GAMMAS[i % 3]);
    let prior = random_prior(rng, na);
    let lambda = LAMBDA_GRID[rng.random_range(0..LAMBDA_GRID.len())];
    (mdp, prior, lambda)
}

fn contraction() -> Result<(bool, String)> {
    let mut rng = seeded(101);
    let mut worst = f64::NEG_INFINITY;
    for i in 0..20 {
        let (mdp, prior, lambda) = small_instance(&mut rng, i);
        for _ in 0..10 {
            let q1 = random_q(&mut rng, mdp.num_states(), mdp.num_actions(), 10.0);
            let q2 = random_q(&mut rng, mdp.num_states(), mdp.num_actions(), 10.0);
            let t1 = regularized_bellman_apply(&mdp, &q1, &prior, lambda)?;
            let t2 = regularized_bellman_apply(&mdp, &q2, &prior, lambda)?;
            worst = worst.max(t1.sup_distance(&t2) - mdp.discount() * q1.sup_distance(&q2));
        }
    }
    Ok((worst <= 1e-12, format!("max ‖TQ1 − TQ2‖ − γ‖Q1 − Q2‖ = {worst:.3e} over 200 pairs")))
}

fn monotonicity() -> Result<(bool, String)> {
    let mut rng = seeded(102);
    let mut violations = 0;
    for i in 0..20 {
        let (mdp, prior, lambda) = small_instance(&mut rng, i);
        for _ in 0..10 {
            let q2 = random_q(&mut rng, mdp.num_states(), mdp.num_actions(), 10.0);
            let mut q1 = q2.clone();
            for v in q1.values_mut() {
                *v += rng.random_range(0.0..2.0);
            }
            let t1 = regularized_bellman_apply(&mdp, &q1, &prior, lambda)?;
            let t2 = regularized_bellman_apply(&mdp, &q2, &prior, lambda)?;
            violations += t1.values().iter().zip(t2.values()).filter(|(a, b)| a < b).count();
        }
    }
    Ok((violations == 0, format!("{violations} element-wise violations over 200 pairs")))
}

fn fixed_point_bound() -> Result<(bool, String)> {
    let mut rng = seeded(103);
    let mut worst_residual: f64 = 0.0;
    let mut worst_slack = f64::INFINITY;
    for i in 0..20 {
        let ns = rng.random_range(1..=5);
        let na = rng.random_range(1..=4);
        let mdp = random_mdp(&mut rng, ns, na, GAMMAS[i % 3]);
        let prior = random_prior(&mut rng, na);
        let v_star = standard_value_iteration(&mdp, 1e-13)?.max_values();
        for lambda in LAMBDA_GRID {
            let (q, _) = regularized_value_iteration(&mdp, &prior, lambda, 1e-11, 1_000_000)?;
            let residual = regularized_bellman_apply(&mdp, &q, &prior, lambda)?.sup_distance(&q);
            worst_residual = worst_residual.max(residual);
            let policy = extract_regularized_policy(&q, &prior, lambda)?;
            let v_pi = mdp.exact_policy_evaluation(&policy)?;
            let gap = lambda * prior.max_log_inverse() / (1.0 - mdp.discount());
            for (vp, vs) in v_pi.iter().zip(&v_star) {
                worst_slack = worst_slack.min(vp - (vs - gap - 1e-8));
            }
        }
    }
    Ok((
        worst_residual <= 1e-10 && worst_slack >= 0.0,
        format!("max residual {worst_residual:.3e}, min bound slack {worst_slack:.3e}"),
    ))
}

fn sandwich() -> Result<(bool, String)> {
    let mut rng = seeded(104);
    let mut violations = 0;
    for _ in 0..1000 {
        let na = rng.random_range(1..=8);
        let row: Vec<f64> = (0..na).map(|_| rng.random_range(-50.0..50.0)).collect();
        let prior = SparsityDistribution::new(random_distribution(&mut rng, na, 0.01))?;
        let lambda = rng.random_range(0.001..2.0);
        let v = soft_value(&row, &prior, lambda)?;
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min_p = prior.probs().iter().copied().fold(f64::INFINITY, f64::min);
        let lower = max - lambda * (1.0 / min_p).ln();
        if v < lower - 1e-12 || v > max + 1e-12 {
            violations += 1;
        }
    }
    Ok((violations == 0, format!("{violations} of 1000 rows outside the bounds")))
}

fn oracle_equivalence() -> Result<(bool, String)> {
    // Two states, two actions; every term of the backup spelled out.
    let transition = vec![0.7, 0.3, 0.2, 0.8, 1.0, 0.0, 0.4, 0.6];
    let reward = vec![1.0, -0.5, 0.25, 2.0];
    let gamma = 0.9;
    let mdp = SparseActionMdp::new(2, 2, transition.clone(), reward.clone(), gamma, vec![0.5, 0.5])?;
    let q = QFunction::from_values(2, 2, vec![0.3, -1.2, 2.5, 0.1])?;
    let prior = SparsityDistribution::new(vec![0.25, 0.75])?;
    let lambda = 0.2;
    let soft = |s: usize| {
        let z: f64 = (0..2).map(|a| prior.probs()[a] * (q.get(s, a) / lambda).exp()).sum();
        lambda * z.ln()
    };
    let applied = regularized_bellman_apply(&mdp, &q, &prior, lambda)?;
    let mut apply_err: f64 = 0.0;
    for s in 0..2 {
        for a in 0..2 {
            let p = &transition[(s * 2 + a) * 2..(s * 2 + a) * 2 + 2];
            let naive = reward[s * 2 + a] + gamma * (p[0] * soft(0) + p[1] * soft(1));
            apply_err = apply_err.max((applied.get(s, a) - naive).abs());
        }
    }

    let chain = four_state_chain()?;
    let vi = standard_value_iteration(&chain, 1e-13)?.max_values();
    let mut best = vec![f64::NEG_INFINITY; 4];
    for code in 0..16usize {
        let actions: Vec<usize> = (0..4).map(|s| (code >> s) & 1).collect();
        let v = chain.exact_policy_evaluation(&StochasticPolicy::deterministic(2, &actions)?)?;
        for (b, x) in best.iter_mut().zip(v) {
            *b = b.max(x);
        }
    }
    let vi_err = vi.iter().zip(&best).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok((
        apply_err <= 1e-12 && vi_err <= 1e-8,
        format!("backup error {apply_err:.3e}, value iteration vs enumeration {vi_err:.3e}"),
    ))
}

/// Three cells plus the absorbing goal, with an unlimited trigger.
fn four_state_chain() -> Result<SparseActionMdp> {
    ChainConfig {
        trigger_budget: Budget::Unlimited,
        ..ChainConfig::new(3, 0, 10)
    }
    .build()
}

/// Window used to decide which arm the bandit currently prefers.
const TRACKING_WINDOW: usize = 100;

fn ducb_tracking() -> Result<(bool, String)> {
    let mut worst_share = f64::INFINITY;
    let mut worst_delay = 0usize;
    for seed in 0..10 {
        let mut rng = seeded(600 + seed);
        let mut bandit = DUcbState::new(2, 0.99, 0.5)?;
        let mut arms = [0.8, 0.2];
        let mut picks = Vec::with_capacity(20_000);
        for round in 0..10_000 {
            let a = bandit.select_arm();
            let r = if rng.random::<f64>() < arms[a] { 1.0 } else { 0.0 };
            bandit.update(a, r)?;
            if round >= 5_000 {
                picks.push(a);
            }
        }
        let share = picks.iter().filter(|&&a| a == 0).count() as f64 / picks.len() as f64;
        worst_share = worst_share.min(share);

        arms.swap(0, 1);
        let mut recent = Vec::with_capacity(2_000);
        let mut delay = usize::MAX;
        for round in 0..5_000 {
            let a = bandit.select_arm();
            let r = if rng.random::<f64>() < arms[a] { 1.0 } else { 0.0 };
            bandit.update(a, r)?;
            recent.push(a);
            if recent.len() >= TRACKING_WINDOW {
                let window = &recent[recent.len() - TRACKING_WINDOW..];
                if 2 * window.iter().filter(|&&x| x == 1).count() > TRACKING_WINDOW {
                    delay = round + 1;
                    break;
                }
            }
        }
        worst_delay = worst_delay.max(delay);
    }
    Ok((
        worst_share > 0.85 && worst_delay <= 2_000,
        format!("min best-arm share {worst_share:.3}, max rounds to follow the swap {worst_delay}"),
    ))
}

fn tabular_learning() -> Result<(bool, String)> {
    let mdp = random_mdp(&mut seeded(12), 3, 2, 0.9).with_horizon(20);
    let prior = SparsityDistribution::uniform(2);
    let lambda = 0.01;
    let (q_star, _) = regularized_value_iteration(&mdp, &prior, lambda, 1e-12, 100_000)?;
    let config = AgentConfig {
        lambda,
        fixed_prior: Some(prior.probs().to_vec()),
        ..AgentConfig::default()
    };
    let mut worst: f64 = 0.0;
    for seed in 0..3 {
        let out = train(&mdp, &config, 200_000, seed)?;
        worst = worst.max(out.params.online.to_table().sup_distance(&q_star));
    }
    Ok((worst < 0.05, format!("max ‖Q − Q*‖∞ = {worst:.4} over 3 seeds")))
}

fn scratch_dir() -> std::path::PathBuf {
    std::env::temp_dir().join("asre-verify-unused")
}

fn directional() -> Result<(bool, String)> {
    let mut ok = true;
    let mut detail = Vec::new();
    for env in [EnvSpec::default_shooter(), EnvSpec::default_market()] {
        let sparse = env.sparse_actions();
        let asre = run_seeds(&benchmark_config(env.clone(), AgentKind::Asre, scratch_dir()), AgentKind::Asre)?;
        let eg = run_seeds(&benchmark_config(env.clone(), AgentKind::Egreedy, scratch_dir()), AgentKind::Egreedy)?;
        let (a, _) = asre.final_mean_std(5)?;
        let (e, _) = eg.final_mean_std(5)?;
        ok &= a > e;
        let mut line = format!("{}: {a:.3} vs {e:.3}", env.name());
        if matches!(env, EnvSpec::Market(_)) {
            let (fa, fe) = (asre.execution_frequency(&sparse), eg.execution_frequency(&sparse));
            ok &= fa <= 0.5 * fe;
            line.push_str(&format!(", frequency {fa:.3} vs {fe:.3}"));
        }
        detail.push(line);
    }
    Ok((ok, detail.join("; ")))
}

fn ablation() -> Result<(bool, String)> {
    let base = benchmark_config(EnvSpec::default_shooter(), AgentKind::Asre, scratch_dir());
    let mut ablated = base.clone();
    ablated.asre.sparsity_regularization = false;
    let (full, _) = run_seeds(&base, AgentKind::Asre)?.final_mean_std(5)?;
    let (abl, _) = run_seeds(&ablated, AgentKind::Asre)?.final_mean_std(5)?;
    Ok((abl < full, format!("ablated {abl:.3} vs full {full:.3}")))
}

fn lambda_ordering() -> Result<(bool, String)> {
    let base = benchmark_config(EnvSpec::default_shooter(), AgentKind::Asre, scratch_dir());
    let rows = super::lambda_sweep(&base, &[0.01, 0.2])?;
    Ok((
        rows[1].final_mean < rows[0].final_mean,
        format!("λ=0.2 {:.3} vs λ=0.01 {:.3}", rows[1].final_mean, rows[0].final_mean),
    ))
}

fn determinism() -> Result<(bool, String)> {
    let mut config = ExperimentConfig::new(EnvSpec::default_chain(), AgentKind::Asre, 2_000, vec![0, 1], scratch_dir());
    config.evaluation = Some(EvaluationConfig {
        interval: 500,
        episodes: 5,
        record_walltime: false,
    });
    let a = run_seeds(&config, AgentKind::Asre)?;
    let b = run_seeds(&config, AgentKind::Asre)?;
    let same = a.runs.iter().zip(&b.runs).all(|(x, y)| x.record.episodes_csv() == y.record.episodes_csv())
        && a.aggregate_csv()? == b.aggregate_csv()?;
    Ok((same, if same { "identical CSV bytes".into() } else { "CSV bytes differ".into() }))
}

fn budget_safety() -> Result<(bool, String)> {
    let mut rng = seeded(112);
    let envs = [EnvSpec::default_shooter(), EnvSpec::default_market(), EnvSpec::default_chain()];
    let mdps = envs.iter().map(|e| e.build()).collect::<Result<Vec<_>>>()?;
    let mut violations = 0;
    let mut lengths = Vec::new();
    for i in 0..1000 {
        let mdp = &mdps[i % 3];
        let dist = random_distribution(&mut rng, mdp.num_actions(), 0.0);
        let policy = StochasticPolicy::state_independent(mdp.num_states(), &dist)?;
        let traj = mdp.run_episode(&mut &policy, &mut rng)?;
        lengths.push(traj.len() as f64);
        if !traj.respects_budgets(mdp) {
            violations += 1;
        }
    }
    let (mean_len, _) = mean_std(&lengths);
    Ok((
        violations == 0,
        format!("{violations} budget violations in 1000 episodes (mean length {mean_len:.1})"),
    ))
}
